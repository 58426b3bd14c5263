#ifndef DCSPLIT_BASELINES_HPP
#define DCSPLIT_BASELINES_HPP

// Classical DC methods on E = f_cvx + P₁ − P₂:
//   DCA    u⁺ = prox_{P₁/ρ}(uⁿ − (∇f_cvx(uⁿ) − ∇P₂(uⁿ))/ρ)
//   BDCA   DCA point y, then E(y + λd) ≤ E(y) − αλ²‖d‖² along d = y − uⁿ
//   pDCAe  DCA step taken from an extrapolated point with FISTA weights

#include "dcsplit/solver.hpp"

#include <chrono>
#include <cmath>
#include <optional>

namespace dcsplit {

struct BaselineConfig
{
    StopCriteria stop;
    /// Overrides the split's ρ when positive.
    double rho = 0.0;
    /// BDCA line search.
    double alpha = 0.2;
    double beta = 0.8;
    double lambda_bar = 5.0;
    int max_backtracks = 50;
    /// pDCAe: fixed restart period and function-value restart.
    int restart_period = 200;
    bool adaptive_restart = true;
    /// pDCAe with extrapolation off reduces to DCA.
    bool extrapolate = true;
    bool keep_iterates = false;
};

namespace detail {

inline const BaselineSplit& require_split(const Problem& p)
{
    if (!p.baseline)
        throw StructuralError("problem '" + p.name + "' has no baseline splitting");
    return *p.baseline;
}

/// One DCA step from `v` with the concave part linearized at `w`.
inline Vector dca_map(const BaselineSplit& s, double rho, const Vector& v, const Vector& w, const Vector& guess)
{
    const Vector z = v - (s.fcvx_grad(v) - s.p2_grad(w)) / rho;
    return s.p1_prox(rho, z, guess);
}

class BaselineRun
{
  public:
    BaselineRun(const Problem& p, const BaselineConfig& cfg, const Vector& u0)
        : p_(p), cfg_(cfg), start_(std::chrono::steady_clock::now()), e0_(energy_E(p, u0))
    {
        if (cfg.keep_iterates)
            res_.iterates.push_back(u0);
    }

    /// Records a step; returns true when the run should stop.
    bool record(const Vector& u_prev, const Vector& u_next, double d_norm, double lambda, int evals,
                std::uint32_t flags = 0)
    {
        TraceRecord r;
        r.n = static_cast<int>(res_.trace.size());
        r.E = energy_E(p_, u_next);
        r.lyapunov = r.E;
        r.step_norm = (u_next - u_prev).norm();
        r.d_norm = d_norm;
        r.lambda = lambda;
        r.grad_norm = stationarity(p_, u_next);
        r.ls_evals = evals;
        r.invariant_flags = flags;
        res_.trace.push_back(r);
        if (cfg_.keep_iterates)
            res_.iterates.push_back(u_next);
        if (d_norm <= 1e-15 * (1.0 + u_prev.norm()))
            reason_ = StopReason::d_zero;
        else if (diverged(r.E, e0_))
            reason_ = StopReason::diverged;
        else
            reason_ = check_stop(cfg_.stop, u_next, u_prev, r.grad_norm);
        return reason_.has_value() || static_cast<int>(res_.trace.size()) >= cfg_.stop.max_iters;
    }

    SolveResult finish(Vector u)
    {
        res_.stop_reason = reason_.value_or(StopReason::max_iters);
        res_.u_final = std::move(u);
        res_.iterations = static_cast<int>(res_.trace.size());
        res_.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return std::move(res_);
    }

    InvariantReport& report() { return res_.report; }

  private:
    const Problem& p_;
    const BaselineConfig& cfg_;
    std::chrono::steady_clock::time_point start_;
    double e0_;
    SolveResult res_;
    std::optional<StopReason> reason_;
};

} // namespace detail

inline SolveResult dca_run(const Problem& p, const BaselineConfig& cfg, const Vector& u0)
{
    const BaselineSplit& s = detail::require_split(p);
    const double rho = cfg.rho > 0.0 ? cfg.rho : s.rho_dca;
    detail::BaselineRun run(p, cfg, u0);
    Vector u = u0;
    if (cfg.stop.max_iters <= 0)
        return run.finish(u);
    for (;;)
    {
        Vector next = detail::dca_map(s, rho, u, u, u);
        require_finite(next, "DCA iterate");
        const double d_norm = (next - u).norm();
        const bool done = run.record(u, next, d_norm, 0.0, 0);
        u = std::move(next);
        if (done)
            break;
    }
    return run.finish(u);
}

inline SolveResult bdca_run(const Problem& p, const BaselineConfig& cfg, const Vector& u0)
{
    const BaselineSplit& s = detail::require_split(p);
    const double rho = cfg.rho > 0.0 ? cfg.rho : s.rho_dca;
    detail::BaselineRun run(p, cfg, u0);
    Vector u = u0;
    if (cfg.stop.max_iters <= 0)
        return run.finish(u);
    for (;;)
    {
        const Vector y = detail::dca_map(s, rho, u, u, u);
        require_finite(y, "BDCA iterate");
        const Vector d = y - u;
        const double dd = d.squaredNorm();
        double lambda = 0.0;
        int evals = 0;
        std::uint32_t flags = 0;
        Vector next = y;
        if (cfg.lambda_bar > 0.0 && dd > 0.0)
        {
            double lam = cfg.lambda_bar;
            double accepted_delta = 0.0;
            for (int k = 0; k <= cfg.max_backtracks; ++k, lam *= cfg.beta)
            {
                const Vector step = lam * d;
                const double delta = energy_delta(p, y, step);
                ++evals;
                if (delta <= -cfg.alpha * lam * lam * dd)
                {
                    lambda = lam;
                    next = y + step;
                    accepted_delta = delta;
                    break;
                }
            }
            const double margin =
                -cfg.alpha * lambda * lambda * dd - accepted_delta + monitor_slack(energy_E(p, y));
            run.report().record(inv_armijo_certificate, run.report().stats[inv_armijo_certificate].checks, margin);
            if (margin < 0.0)
                flags |= invariant_bit(inv_armijo_certificate);
        }
        const bool done = run.record(u, next, std::sqrt(dd), lambda, evals, flags);
        u = std::move(next);
        if (done)
            break;
    }
    return run.finish(u);
}

inline SolveResult pdcae_run(const Problem& p, const BaselineConfig& cfg, const Vector& u0)
{
    const BaselineSplit& s = detail::require_split(p);
    const double rho = cfg.rho > 0.0 ? cfg.rho : s.rho_pdcae;
    detail::BaselineRun run(p, cfg, u0);
    Vector u = u0;
    Vector u_prev = u0;
    if (cfg.stop.max_iters <= 0)
        return run.finish(u);
    double theta_prev = 1.0;
    double theta = 1.0;
    int since_restart = 0;
    double e_u = energy_E(p, u);
    for (;;)
    {
        const double weight = cfg.extrapolate ? (theta_prev - 1.0) / theta : 0.0;
        const Vector v = u + weight * (u - u_prev);
        Vector next = detail::dca_map(s, rho, v, u, u);
        require_finite(next, "pDCAe iterate");
        const double e_next = energy_E(p, next);
        const double d_norm = (next - u).norm();
        const bool done = run.record(u, next, d_norm, weight, 0);
        const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        theta_prev = theta;
        theta = theta_next;
        ++since_restart;
        if ((cfg.restart_period > 0 && since_restart >= cfg.restart_period) ||
            (cfg.adaptive_restart && e_next > e_u))
        {
            theta_prev = theta = 1.0;
            since_restart = 0;
        }
        u_prev = std::move(u);
        u = std::move(next);
        e_u = e_next;
        if (done)
            break;
    }
    return run.finish(u);
}

} // namespace dcsplit

#endif
