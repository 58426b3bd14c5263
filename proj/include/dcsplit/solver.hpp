#ifndef DCSPLIT_SOLVER_HPP
#define DCSPLIT_SOLVER_HPP

// Preconditioned BDF2 / Adams-Bashforth convex splitting with optional Armijo
// acceleration: solve for yⁿ, set dⁿ = yⁿ − uⁿ, search λₙ, uⁿ⁺¹ = yⁿ + λₙdⁿ.

#include "dcsplit/diagnostics.hpp"
#include "dcsplit/linesearch.hpp"
#include "dcsplit/newton.hpp"
#include "dcsplit/precond.hpp"
#include "dcsplit/splitting.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcsplit {

enum class BoundMode
{
    /// Step-size bounds and invariant monitors are hard failures.
    strict_theory,
    /// Bounds and monitor violations are only reported.
    experiment
};

enum class StopReason
{
    d_zero,
    rel_increment,
    grad_norm,
    increment,
    dice_bound,
    max_iters,
    diverged
};

inline std::string to_string(StopReason r)
{
    switch (r)
    {
    case StopReason::d_zero:
        return "d_zero";
    case StopReason::rel_increment:
        return "rel_increment";
    case StopReason::grad_norm:
        return "grad_norm";
    case StopReason::increment:
        return "increment";
    case StopReason::dice_bound:
        return "dice_bound";
    case StopReason::max_iters:
        return "max_iters";
    case StopReason::diverged:
        return "diverged";
    }
    return "unknown";
}

struct StopCriteria
{
    /// ‖uⁿ⁺¹ − uⁿ‖ / max(1, ‖uⁿ⁺¹‖) below this stops; ≤ 0 disables.
    double rel_increment_tol = 1e-12;
    std::optional<double> grad_norm_tol;
    std::optional<double> increment_tol;
    /// Stops once dice_fn(u) reaches the bound.
    std::optional<double> dice_bound;
    std::function<double(const Vector&)> dice_fn;
    int max_iters = 10000;
};

struct TraceRecord
{
    int n = 0;
    double E = 0.0;
    double lyapunov = 0.0;
    double step_norm = 0.0;
    double d_norm = 0.0;
    double lambda = 0.0;
    double grad_norm = 0.0;
    int ls_evals = 0;
    /// Bit i set when invariant i was violated at this step.
    std::uint32_t invariant_flags = 0;
    bool ls_fallback = false;
};

struct SolveResult
{
    Vector u_final;
    int iterations = 0;
    StopReason stop_reason = StopReason::max_iters;
    std::vector<TraceRecord> trace;
    double wall_time = 0.0;
    InvariantReport report;
    std::vector<std::string> warnings;
    /// u⁰, u¹, … when requested.
    std::vector<Vector> iterates;
};

struct SolverConfig
{
    Anchor anchor = Anchor::n_mode;
    double dt = 1.0;
    PreconditionerSpec preconditioner;
    std::optional<LineSearchConfig> linesearch;
    BoundMode bound_mode = BoundMode::experiment;
    StopCriteria stop;
    bool monitor = true;
    bool keep_iterates = false;
    NewtonOptions newton;
};

class InvariantViolation : public std::runtime_error
{
  public:
    InvariantViolation(const std::string& name, long n)
        : std::runtime_error("invariant " + name + " violated at iteration " + std::to_string(n)), name_(name), n_(n)
    {
    }
    const std::string& invariant() const { return name_; }
    long iteration() const { return n_; }

  private:
    std::string name_;
    long n_;
};

/// Admissible λ̄_max for the anchor mode:
/// n: √(4/(3δtL) − ½) − 1;  t: min(√((8 − 3δtL)/(6δtL)) − 1, √5 − 1).
inline double max_step_bound(double dt, double lipschitz, Anchor anchor)
{
    if (!(dt > 0.0) || !(lipschitz > 0.0))
        throw StructuralError("max_step_bound requires dt > 0 and L > 0");
    if (!(dt < dt_bound(lipschitz)))
        throw StructuralError("max_step_bound requires dt < 2/(3L)");
    const double q = dt * lipschitz;
    if (anchor == Anchor::n_mode)
        return std::sqrt(4.0 / (3.0 * q) - 0.5) - 1.0;
    return std::min(std::sqrt((8.0 - 3.0 * q) / (6.0 * q)) - 1.0, std::sqrt(5.0) - 1.0);
}

/// Solves the strongly convex subproblem for yⁿ. Affine h uses the
/// preconditioned sweep; a separable part uses its resolvent when 𝕄 is
/// diagonal and Newton-CG otherwise.
inline Vector solve_subproblem(const Problem& p, const Preconditioner* pc, const SurrogateState& s,
                               const Vector& u_hat, const Vector& f_n, const Vector& f_nm1,
                               const NewtonOptions& nopt = {})
{
    if (p.linear)
    {
        const Vector b = rhs_bn(s, p.linear->b0, f_n, f_nm1);
        if (!p.separable)
            return precond_sweep({pc->T(), b, u_hat}, *pc);
        if (pc->kind() != PreconditionerKind::exact && pc->sweeps() > 1)
            throw StructuralError("multiple sweeps are not defined for a subproblem with a separable part");
        const SeparablePart& g = *p.separable;
        const Vector r = pc->apply_big_M(u_hat) + b - pc->T().apply(u_hat);
        if (pc->is_diagonal())
            return g.resolve(pc->diagonal_values(), r);
        auto value = [&](const Vector& y) { return 0.5 * y.dot(pc->apply_big_M(y)) - r.dot(y) + g.value(y); };
        auto grad = [&](const Vector& y) -> Vector { return pc->apply_big_M(y) - r + g.gradient(y); };
        auto hess = [&](const Vector& y, const Vector& v) -> Vector {
            return pc->apply_big_M(v) + g.curvature(y).cwiseProduct(v);
        };
        NewtonOptions opt = nopt;
        opt.scale = r.norm();
        const NewtonResult res = newton_cg_minimize(value, grad, hess, u_hat, opt);
        if (!res.converged)
            throw StructuralError("subproblem Newton-CG did not converge");
        return res.x;
    }
    if (pc != nullptr && pc->kind() != PreconditionerKind::exact)
        throw StructuralError("a non-affine h requires the exact preconditioner");
    if (!p.hess_h_apply)
        throw StructuralError("a non-affine h requires hess_h_apply");
    const Vector gfn = (2.0 / (3.0 * s.dt)) * (s.u_n - s.u_nm1) - 2.0 * f_n + f_nm1;
    auto value = [&](const Vector& y) {
        return p.eval_H(y) + (y - s.u_n).squaredNorm() / s.dt - gfn.dot(y);
    };
    auto grad = [&](const Vector& y) -> Vector { return p.grad_h(y) + (2.0 / s.dt) * (y - s.u_n) - gfn; };
    auto hess = [&](const Vector& y, const Vector& v) -> Vector {
        return p.hess_h_apply(y, v) + (2.0 / s.dt) * v;
    };
    NewtonOptions opt = nopt;
    opt.scale = gfn.norm();
    const NewtonResult res = newton_cg_minimize(value, grad, hess, u_hat, opt);
    if (!res.converged)
        throw StructuralError("subproblem Newton-CG did not converge");
    return res.x;
}

/// Result of one outer step.
struct StepOutcome
{
    Vector y;
    Vector u_next;
    double lambda = 0.0;
    bool d_zero = false;
    TraceRecord record;
};

/// Owns the two-step history and advances it one step at a time.
class Stepper
{
  public:
    Stepper(const Problem& p, const SolverConfig& cfg, Vector u_n, Vector u_nm1)
        : p_(&p), cfg_(cfg), u_n_(std::move(u_n)), u_nm1_(std::move(u_nm1)),
          tracker_(cfg.dt, cfg.linesearch ? cfg.linesearch->alpha : 0.0)
    {
        require_finite(u_n_, "initial point");
        require_same_size(u_n_.size(), u_nm1_.size(), "initial history");
        if (p.dimension != 0)
            require_same_size(u_n_.size(), p.dimension, "initial point");
        lipschitz_ = p.lipschitz_L;
        box_ = p.box_radius;
        validate();
        if (p.linear)
            pc_.emplace(Preconditioner::bind(cfg.preconditioner, p.linear->a, cfg.dt));
        else if (cfg.preconditioner.kind != PreconditionerKind::exact)
            throw StructuralError("preconditioners other than exact need an affine part");
        if (cfg_.linesearch)
        {
            cfg_.linesearch->mode =
                cfg.anchor == Anchor::t_mode ? LineSearchMode::til_fallback : LineSearchMode::standard;
            cfg_.linesearch->validate();
        }
    }

    const Vector& u_n() const { return u_n_; }
    const Vector& u_nm1() const { return u_nm1_; }
    const InvariantReport& report() const { return tracker_.report(); }
    const std::vector<std::string>& warnings() const { return warnings_; }
    const Preconditioner* preconditioner() const { return pc_ ? &*pc_ : nullptr; }
    double lipschitz() const { return lipschitz_; }
    long steps_taken() const { return n_; }

    double m_norm_sq(const Vector& v) const { return pc_ ? pc_->m_norm_sq(v) : 0.0; }

    /// A(x, y) in n_mode, Ã(x, y) in t_mode.
    double lyapunov_value(const Vector& x, const Vector& y) const
    {
        if (cfg_.anchor == Anchor::t_mode && pc_)
            return lyapunov(*p_, cfg_.dt, x, y, [this](const Vector& v) { return m_norm_sq(v); }, lipschitz_);
        return lyapunov(*p_, cfg_.dt, x, y, {}, lipschitz_);
    }

    StepOutcome step()
    {
        const SurrogateState s{u_n_, u_nm1_, cfg_.dt};
        const Vector f_n = p_->grad_f(u_n_);
        const Vector f_nm1 = p_->grad_f(u_nm1_);
        const Vector u_hat =
            cfg_.anchor == Anchor::n_mode ? u_n_ : Vector((4.0 / 3.0) * u_n_ - (1.0 / 3.0) * u_nm1_);

        StepOutcome out;
        out.y = solve_subproblem(*p_, preconditioner(), s, u_hat, f_n, f_nm1, cfg_.newton);
        require_finite(out.y, "subproblem solution");
        const Vector d = out.y - u_n_;
        const double d_norm = d.norm();
        out.record.n = static_cast<int>(n_);
        out.record.d_norm = d_norm;

        if (d_norm <= 1e-15 * (1.0 + u_n_.norm()))
        {
            out.d_zero = true;
            out.u_next = out.y;
        }
        else if (cfg_.linesearch)
        {
            try
            {
                const LineSearchResult ls = armijo(s, *p_, out.y, d, *cfg_.linesearch);
                out.lambda = ls.lambda;
                out.record.ls_evals = ls.evals;
                out.record.ls_fallback = ls.fallback;
            }
            catch (const LineSearchExhausted& e)
            {
                if (cfg_.bound_mode == BoundMode::strict_theory)
                    throw;
                out.lambda = 0.0;
                out.record.ls_fallback = true;
                warn_once("line search exhausted; continuing with lambda = 0");
            }
            out.u_next = out.y + out.lambda * d;
        }
        else
            out.u_next = out.y;

        out.record.lambda = out.lambda;
        out.record.step_norm = (out.u_next - u_n_).norm();
        update_lipschitz(out.u_next);

        const double lyap_prev = lyapunov_value(u_n_, u_nm1_);
        const double lyap_next = lyapunov_value(out.u_next, u_n_);
        out.record.lyapunov = lyap_next;
        out.record.E = energy_E(*p_, out.u_next);
        out.record.grad_norm = stationarity(*p_, out.u_next);

        if (cfg_.monitor && !out.d_zero)
        {
            StepData sd{u_nm1_, u_n_, out.y, out.u_next, out.lambda, cfg_.dt, lipschitz_,
                        cfg_.linesearch ? cfg_.linesearch->alpha : 0.0, cfg_.anchor};
            std::function<double(const Vector&)> mnorm;
            if (pc_ && pc_->kind() != PreconditionerKind::exact)
                mnorm = [this](const Vector& v) { return m_norm_sq(v); };
            const StepChecks checks = check_step_invariants(*p_, sd, mnorm);
            const double step_sq = out.record.step_norm * out.record.step_norm;
            out.record.invariant_flags =
                tracker_.record(n_, checks, lyap_prev, lyap_next, step_sq, out.lambda, lipschitz_);
            if (out.record.invariant_flags != 0 && cfg_.bound_mode == BoundMode::strict_theory)
                for (int i = 0; i < inv_count; ++i)
                    if (out.record.invariant_flags & invariant_bit(i))
                        throw InvariantViolation(invariant_name(i), n_);
        }

        u_nm1_ = std::move(u_n_);
        u_n_ = out.u_next;
        ++n_;
        return out;
    }

  private:
    void validate()
    {
        if (!(cfg_.dt > 0.0))
            throw StructuralError("dt must be positive");
        if (!(lipschitz_ > 0.0))
            return;
        const double bound = dt_bound(lipschitz_);
        if (!(cfg_.dt < bound))
        {
            if (cfg_.bound_mode == BoundMode::strict_theory)
                throw StructuralError("dt = " + std::to_string(cfg_.dt) + " violates dt < 2/(3L) = " +
                                      std::to_string(bound));
            warn_once("dt exceeds 2/(3L)");
            return;
        }
        if (cfg_.linesearch)
        {
            const double lam = max_step_bound(cfg_.dt, lipschitz_, cfg_.anchor);
            if (!(cfg_.linesearch->lambda_bar_max < lam))
            {
                if (cfg_.bound_mode == BoundMode::strict_theory)
                    throw StructuralError("lambda_bar_max = " + std::to_string(cfg_.linesearch->lambda_bar_max) +
                                          " exceeds the admissible bound " + std::to_string(lam));
                warn_once("lambda_bar_max exceeds the admissible bound " + std::to_string(lam));
            }
        }
    }

    void update_lipschitz(const Vector& u)
    {
        if (!p_->lipschitz_on_box || u.size() == 0)
            return;
        const double radius = u.cwiseAbs().maxCoeff();
        if (radius <= box_)
            return;
        box_ = radius;
        lipschitz_ = p_->lipschitz_on_box(radius);
        warn_once("iterate left the Lipschitz box; L recomputed");
    }

    void warn_once(const std::string& msg)
    {
        for (const auto& w : warnings_)
            if (w == msg)
                return;
        warnings_.push_back(msg);
    }

    const Problem* p_;
    SolverConfig cfg_;
    Vector u_n_;
    Vector u_nm1_;
    std::optional<Preconditioner> pc_;
    InvariantTracker tracker_;
    double lipschitz_ = 0.0;
    double box_ = 0.0;
    long n_ = 0;
    std::vector<std::string> warnings_;
};

/// Stop test after a step from u_n to u_next.
inline std::optional<StopReason> check_stop(const StopCriteria& stop, const Vector& u_next, const Vector& u_n,
                                            double grad_norm)
{
    const double inc = (u_next - u_n).norm();
    if (stop.rel_increment_tol > 0.0 && inc / std::max(1.0, u_next.norm()) < stop.rel_increment_tol)
        return StopReason::rel_increment;
    if (stop.increment_tol && inc < *stop.increment_tol)
        return StopReason::increment;
    if (stop.grad_norm_tol && grad_norm < *stop.grad_norm_tol)
        return StopReason::grad_norm;
    if (stop.dice_bound && stop.dice_fn && stop.dice_fn(u_next) >= *stop.dice_bound)
        return StopReason::dice_bound;
    return std::nullopt;
}

inline bool diverged(double e, double e0) { return !std::isfinite(e) || e > 1e12 * (1.0 + std::abs(e0)); }

/// Runs from u⁻¹ = u⁰ until a stop criterion fires.
inline SolveResult run(const Problem& p, const SolverConfig& cfg, const Vector& u0)
{
    const auto start = std::chrono::steady_clock::now();
    SolveResult res;
    Stepper st(p, cfg, u0, u0);
    const double e0 = energy_E(p, u0);
    if (cfg.keep_iterates)
        res.iterates.push_back(u0);
    std::optional<StopReason> reason;
    for (int it = 0; it < cfg.stop.max_iters && !reason; ++it)
    {
        const Vector u_prev = st.u_n();
        StepOutcome out = st.step();
        res.trace.push_back(out.record);
        if (cfg.keep_iterates)
            res.iterates.push_back(out.u_next);
        if (out.d_zero)
            reason = StopReason::d_zero;
        else if (diverged(out.record.E, e0))
            reason = StopReason::diverged;
        else
            reason = check_stop(cfg.stop, out.u_next, u_prev, out.record.grad_norm);
    }
    res.stop_reason = reason.value_or(StopReason::max_iters);
    if (res.stop_reason == StopReason::diverged)
        res.warnings.push_back("energy diverged; run aborted");
    res.u_final = st.u_n();
    res.iterations = static_cast<int>(res.trace.size());
    res.report = st.report();
    res.warnings.insert(res.warnings.begin(), st.warnings().begin(), st.warnings().end());
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Advances a given history (uⁿ, uⁿ⁻¹) a fixed number of steps without
/// monitors or stopping; returns the last iterate.
inline Vector run_fixed_steps(const Problem& p, SolverConfig cfg, const Vector& u_n, const Vector& u_nm1,
                              int steps)
{
    cfg.monitor = false;
    Stepper st(p, cfg, u_n, u_nm1);
    for (int i = 0; i < steps; ++i)
        st.step();
    return st.u_n();
}

} // namespace dcsplit

#endif
