#ifndef DCSPLIT_DIAGNOSTICS_HPP
#define DCSPLIT_DIAGNOSTICS_HPP

// Runtime monitors for the descent, Lyapunov and summability inequalities,
// finite-difference gradients, and empirical rate classification.

#include "dcsplit/splitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace dcsplit {

enum class Anchor
{
    /// ûⁿ = uⁿ
    n_mode,
    /// ûⁿ = (4/3)uⁿ − (1/3)uⁿ⁻¹
    t_mode
};

inline std::string to_string(Anchor a) { return a == Anchor::n_mode ? "n" : "t"; }

enum Invariant : int
{
    inv_descent_i = 0,
    inv_descent_ii,
    inv_lyapunov_decrease,
    inv_partial_sum_bound,
    inv_armijo_certificate,
    inv_count
};

inline const char* invariant_name(int i)
{
    static const char* names[] = {"descent_i", "descent_ii", "lyapunov_decrease", "partial_sum_bound",
                                  "armijo_certificate"};
    return names[i];
}

inline std::uint32_t invariant_bit(int i) { return 1u << i; }

/// One accepted step uⁿ⁻¹, uⁿ → yⁿ → uⁿ⁺¹ = yⁿ + λₙdⁿ.
struct StepData
{
    Vector u_nm1;
    Vector u_n;
    Vector y;
    Vector u_next;
    double lambda = 0.0;
    double dt = 0.0;
    double lipschitz = 0.0;
    double alpha = 0.0;
    Anchor anchor = Anchor::n_mode;
};

/// Margins are rhs − lhs + slack; negative means violated.
struct StepChecks
{
    std::array<double, inv_count> margin{};
    std::array<bool, inv_count> checked{};
    double slack = 0.0;

    bool ok(int i) const { return !checked[i] || margin[i] >= 0.0; }
    std::uint32_t flags() const
    {
        std::uint32_t f = 0;
        for (int i = 0; i < inv_count; ++i)
            if (!ok(i))
                f |= invariant_bit(i);
        return f;
    }
};

inline double monitor_slack(double reference) { return 1e-9 * (1.0 + std::abs(reference)); }

/// Descent and Armijo inequalities for one step. `m_norm` evaluates ‖·‖²_M for
/// the weight realized by the preconditioner; empty means M = 0.
inline StepChecks check_step_invariants(const Problem& p, const StepData& st,
                                        const std::function<double(const Vector&)>& m_norm = {})
{
    const SurrogateState s{st.u_n, st.u_nm1, st.dt};
    const SurrogateEnergy en(p, s);
    auto mn = [&](const Vector& v) { return m_norm ? m_norm(v) : 0.0; };
    const double L = st.lipschitz;
    const double dt = st.dt;

    StepChecks out;
    const double e_un = en.En(st.u_n);
    out.slack = monitor_slack(e_un);
    const Vector d = st.y - st.u_n;
    // Energies enter only as differences from Eⁿ(uⁿ) and Eⁿ(yⁿ).
    const double drop_y = en.En_delta(st.u_n, d);
    const double dd = d.squaredNorm();
    const double dm = mn(d);
    const double c1 = 4.0 / (3.0 * dt) - 0.5 * L;
    const double c2 = 2.0 / (3.0 * dt) - L;

    double rhs_i = -c1 * dd - dm;
    double rhs_ii = -c2 * dd - dm;
    if (st.anchor == Anchor::t_mode)
    {
        const double em = mn(st.u_n - st.u_nm1);
        rhs_i = -c1 * dd - (5.0 / 6.0) * dm + em / 6.0;
        rhs_ii = -c2 * dd - (5.0 / 6.0) * dm + em / 6.0;
    }
    out.checked[inv_descent_i] = true;
    out.margin[inv_descent_i] = rhs_i - drop_y + out.slack;
    if (p.smooth())
    {
        out.checked[inv_descent_ii] = true;
        out.margin[inv_descent_ii] = rhs_ii - en.grad_En(st.y).dot(d) + out.slack;
    }
    out.checked[inv_armijo_certificate] = true;
    if (st.lambda > 0.0)
    {
        const double rise = en.En_delta(st.y, Vector(st.u_next - st.y));
        out.margin[inv_armijo_certificate] = -st.alpha * st.lambda * dd - rise + out.slack;
    }
    else
        out.margin[inv_armijo_certificate] = out.slack;
    return out;
}

/// Negative control: pushes yⁿ by `scale`·‖dⁿ‖ along the ascent direction of
/// Eⁿ and keeps uⁿ⁺¹ − yⁿ fixed.
inline StepData corrupt_step(const Problem& p, StepData st, double scale = 10.0)
{
    const SurrogateEnergy en(p, SurrogateState{st.u_n, st.u_nm1, st.dt});
    const Vector step = st.u_next - st.y;
    Vector g = en.grad_En(st.y);
    const double gn = g.norm();
    if (gn > 0.0)
        g /= gn;
    else
        g = Vector::Ones(g.size()) / std::sqrt(static_cast<double>(g.size()));
    st.y += scale * (st.y - st.u_n).norm() * g;
    st.u_next = st.y + step;
    return st;
}

struct InvariantStat
{
    long checks = 0;
    long violations = 0;
    /// Smallest margin seen (negative on violation).
    double worst_margin = std::numeric_limits<double>::infinity();
    long first_violation = -1;
    bool skipped = false;
};

struct InvariantReport
{
    std::array<InvariantStat, inv_count> stats{};

    bool all_pass() const
    {
        for (const auto& s : stats)
            if (s.violations > 0)
                return false;
        return true;
    }

    std::vector<std::string> failing() const
    {
        std::vector<std::string> out;
        for (int i = 0; i < inv_count; ++i)
            if (stats[i].violations > 0)
                out.emplace_back(invariant_name(i));
        return out;
    }

    void record(int i, long n, double margin)
    {
        InvariantStat& s = stats[i];
        ++s.checks;
        s.worst_margin = std::min(s.worst_margin, margin);
        if (margin < 0.0)
        {
            ++s.violations;
            if (s.first_violation < 0)
                s.first_violation = n;
        }
    }
};

/// Constant K with Σ‖uⁿ⁺¹ − uⁿ‖² ≤ K·(A(u¹, u⁰) − min A); infinite when the
/// denominator is not positive.
inline double partial_sum_constant(double dt, double lipschitz, double alpha, double lambda_min, double lambda_max)
{
    const double q = (1.0 + lambda_max) * (1.0 + lambda_max);
    const double c = 4.0 / (3.0 * dt) - 0.5 * lipschitz - lipschitz * q;
    const double denom = alpha * lambda_min + c;
    if (!(denom > 0.0))
        return std::numeric_limits<double>::infinity();
    return q / denom;
}

/// Tracks Lyapunov monotonicity and the partial-sum bound along a run.
class InvariantTracker
{
  public:
    InvariantTracker(double dt, double alpha) : dt_(dt), alpha_(alpha) {}

    /// `lyap_prev` = A(uⁿ, uⁿ⁻¹), `lyap_next` = A(uⁿ⁺¹, uⁿ).
    std::uint32_t record(long n, const StepChecks& checks, double lyap_prev, double lyap_next, double step_sq,
                         double lambda, double lipschitz)
    {
        std::uint32_t flags = 0;
        for (int i : {inv_descent_i, inv_descent_ii, inv_armijo_certificate})
            if (checks.checked[i])
            {
                report_.record(i, n, checks.margin[i]);
                if (checks.margin[i] < 0.0)
                    flags |= invariant_bit(i);
            }

        const double lyap_margin = lyap_prev - lyap_next + monitor_slack(lyap_prev);
        report_.record(inv_lyapunov_decrease, n, lyap_margin);
        if (lyap_margin < 0.0)
            flags |= invariant_bit(inv_lyapunov_decrease);

        lambda_max_ = std::max(lambda_max_, lambda);
        if (lambda > 0.0)
            lambda_min_pos_ = std::min(lambda_min_pos_, lambda);
        else
            saw_zero_ = true;
        lipschitz_ = std::max(lipschitz_, lipschitz);

        // Summation starts at uⁿ⁺¹ − uⁿ with n = 1, anchored at A(u¹, u⁰).
        if (n == 0)
        {
            anchor_value_ = lyap_next;
            min_lyap_ = lyap_next;
            return flags;
        }
        min_lyap_ = std::min(min_lyap_, lyap_next);
        partial_sum_ += step_sq;
        const double lambda_min = saw_zero_ || !std::isfinite(lambda_min_pos_) ? 0.0 : lambda_min_pos_;
        const double k = partial_sum_constant(dt_, lipschitz_, alpha_, lambda_min, lambda_max_);
        if (!std::isfinite(k))
        {
            report_.stats[inv_partial_sum_bound].skipped = true;
            return flags;
        }
        const double bound = k * (anchor_value_ - min_lyap_);
        const double margin = bound - partial_sum_ + monitor_slack(anchor_value_);
        report_.record(inv_partial_sum_bound, n, margin);
        if (margin < 0.0)
            flags |= invariant_bit(inv_partial_sum_bound);
        return flags;
    }

    const InvariantReport& report() const { return report_; }
    double partial_sum() const { return partial_sum_; }

  private:
    double dt_;
    double alpha_;
    double lipschitz_ = 0.0;
    double lambda_max_ = 0.0;
    double lambda_min_pos_ = std::numeric_limits<double>::infinity();
    bool saw_zero_ = false;
    double anchor_value_ = 0.0;
    double min_lyap_ = 0.0;
    double partial_sum_ = 0.0;
    InvariantReport report_;
};

enum class RateClass
{
    finite_termination,
    linear,
    sublinear,
    inconclusive
};

inline std::string to_string(RateClass c)
{
    switch (c)
    {
    case RateClass::finite_termination:
        return "finite_termination";
    case RateClass::linear:
        return "linear";
    case RateClass::sublinear:
        return "sublinear";
    case RateClass::inconclusive:
        return "inconclusive";
    }
    return "inconclusive";
}

struct RateFit
{
    RateClass kind = RateClass::inconclusive;
    /// Contraction factor for linear traces.
    double eta = 0.0;
    /// Decay exponent for sublinear traces.
    double exponent = 0.0;
    double r2_linear = 0.0;
    double r2_loglog = 0.0;
};

namespace detail {

struct LineFit
{
    double slope = 0.0;
    double r2 = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

} // namespace detail

/// Classifies eᵢ (entry i belongs to n = i + 1) by comparing log-linear and
/// log-log fits. Trailing exact zeros mean finite termination.
inline RateFit rate_fit(const std::vector<double>& errors)
{
    RateFit out;
    if (errors.size() < 20)
        return out;
    std::size_t last_positive = errors.size();
    while (last_positive > 0 && errors[last_positive - 1] == 0.0)
        --last_positive;
    if (errors.size() - last_positive >= 2)
    {
        out.kind = RateClass::finite_termination;
        return out;
    }
    const double top = *std::max_element(errors.begin(), errors.begin() + last_positive);
    std::vector<double> n_lin, n_log, log_e;
    for (std::size_t i = 0; i < last_positive; ++i)
    {
        if (!(errors[i] > 1e-10 * top))
            break;
        n_lin.push_back(static_cast<double>(i + 1));
        n_log.push_back(std::log(static_cast<double>(i + 1)));
        log_e.push_back(std::log(errors[i]));
    }
    if (log_e.size() < 10)
        return out;
    const detail::LineFit lin = detail::least_squares(n_lin, log_e);
    const detail::LineFit pw = detail::least_squares(n_log, log_e);
    out.r2_linear = lin.r2;
    out.r2_loglog = pw.r2;
    out.eta = std::exp(lin.slope);
    out.exponent = -pw.slope;
    out.kind = lin.r2 >= pw.r2 ? RateClass::linear : RateClass::sublinear;
    return out;
}

/// rate_fit on ‖uⁿ − u*‖ with u* the final iterate (dropped from the fit).
inline RateFit rate_fit_iterates(const std::vector<Vector>& iterates)
{
    if (iterates.size() < 2)
        return {};
    const Vector& star = iterates.back();
    std::vector<double> errors;
    for (std::size_t i = 0; i + 1 < iterates.size(); ++i)
        errors.push_back((iterates[i] - star).norm());
    return rate_fit(errors);
}

inline double fd_step(const Vector& u) { return 1e-5 * (1.0 + u.norm()); }

/// Central differences (fn(u + heᵢ) − fn(u − heᵢ))/(2h); h ≤ 0 selects 1e-5·(1 + ‖u‖).
inline Vector fd_gradient_oracle(const std::function<double(const Vector&)>& fn, const Vector& u, double h = 0.0)
{
    if (!(h > 0.0))
        h = fd_step(u);
    Vector g(u.size());
    Vector w = u;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double keep = w[i];
        w[i] = keep + h;
        const double fp = fn(w);
        w[i] = keep - h;
        const double fm = fn(w);
        w[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// True when some |uᵢ| lies within 10h of a breakpoint magnitude.
inline bool near_breakpoint(const Vector& u, const std::vector<double>& breakpoints, double h)
{
    for (Index i = 0; i < u.size(); ++i)
        for (double b : breakpoints)
            if (std::abs(std::abs(u[i]) - b) < 10.0 * h)
                return true;
    return false;
}

/// Redraws coordinates near a breakpoint until none remain; `draw` supplies
/// fresh coordinate values.
inline Vector resample_away_from_breakpoints(Vector u, const std::vector<double>& breakpoints,
                                             const std::function<double()>& draw, int max_rounds = 1000)
{
    for (int round = 0; round < max_rounds; ++round)
    {
        const double h = fd_step(u);
        bool clean = true;
        for (Index i = 0; i < u.size(); ++i)
            for (double b : breakpoints)
                if (std::abs(std::abs(u[i]) - b) < 10.0 * h)
                {
                    u[i] = draw();
                    clean = false;
                }
        if (clean)
            return u;
    }
    throw StructuralError("could not move probe point away from breakpoints");
}

inline double relative_error(const Vector& approx, const Vector& exact)
{
    return (approx - exact).norm() / std::max(exact.norm(), 1e-12);
}

} // namespace dcsplit

#endif
