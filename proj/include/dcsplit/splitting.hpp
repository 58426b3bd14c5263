#ifndef DCSPLIT_SPLITTING_HPP
#define DCSPLIT_SPLITTING_HPP

// Split objective E = H + F and the per-iteration surrogate energies
//
//   Hⁿ(u) = H(u) + (1/δt)‖u − uⁿ‖²
//   Fⁿ(u) = (1/(3δt))‖u − uⁿ⁻¹‖² − F(u) − ⟨f(uⁿ) − f(uⁿ⁻¹), u − uⁿ⁻¹⟩
//   Eⁿ(u) = Hⁿ(u) − Fⁿ(u)
//
// whose minimization with an extra proximal weight M reproduces one step of the
// BDF2 / Adams-Bashforth convex splitting scheme.

#include "dcsplit/linops.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace dcsplit {

using ScalarFn = std::function<double(const Vector&)>;
using VectorFn = std::function<Vector(const Vector&)>;

/// Convex separable term g(u) = Σ φ(uᵢ) inside H.
struct SeparablePart
{
    ScalarFn value;
    /// Gradient g'(u); empty when φ is nonsmooth.
    VectorFn gradient;
    /// Solves cᵢyᵢ + φ'(yᵢ) ∋ rᵢ for every coordinate (cᵢ > 0).
    std::function<Vector(const Vector& c, const Vector& r)> resolve;
    /// Generalized second derivative diag(φ''(uᵢ)).
    VectorFn curvature;
};

/// h(u) = A u − b₀ (+ g'(u) when a separable part is present).
struct LinearPart
{
    LinearOperator a;
    Vector b0;
};

/// E = f_cvx + P₁ − P₂, the classical DC splitting used by the baselines.
struct BaselineSplit
{
    ScalarFn p1_value;
    /// argmin_u P₁(u) + (ρ/2)‖u − z‖², warm-started at `guess`.
    std::function<Vector(double rho, const Vector& z, const Vector& guess)> p1_prox;
    ScalarFn fcvx_value;
    VectorFn fcvx_grad;
    ScalarFn p2_value;
    VectorFn p2_grad;
    /// Proximal weight making (ρ/2)‖u‖² + P₂ − f_cvx convex (DCA, BDCA).
    double rho_dca = 0.0;
    /// Lipschitz constant of ∇f_cvx (pDCAe).
    double rho_pdcae = 0.0;
};

struct Problem
{
    std::string name;
    Index dimension = 0;
    ScalarFn eval_H;
    VectorFn grad_h;
    ScalarFn eval_F;
    VectorFn grad_f;
    double lipschitz_L = 0.0;
    std::optional<LinearPart> linear;
    std::optional<SeparablePart> separable;
    /// Generalized Hessian-vector product of H, used by the nonlinear subproblem path.
    std::function<Vector(const Vector& u, const Vector& v)> hess_h_apply;
    /// Set when f is only locally Lipschitz: L as a function of the ‖u‖∞ box radius.
    std::function<double(double radius)> lipschitz_on_box;
    double box_radius = 0.0;
    std::optional<BaselineSplit> baseline;
    /// Norm of the minimal-norm subgradient of E, for nonsmooth H.
    ScalarFn stationarity_norm;
    /// H(u + w) − H(u) and F(u + w) − F(u) without cancellation against the
    /// full energy; optional.
    std::function<double(const Vector& u, const Vector& w)> delta_H;
    std::function<double(const Vector& u, const Vector& w)> delta_F;

    bool smooth() const { return static_cast<bool>(grad_h); }
    /// h(u) = Au − b₀ exactly.
    bool affine() const { return linear.has_value() && !separable.has_value(); }
};

inline double energy_E(const Problem& p, const Vector& u) { return p.eval_H(u) + p.eval_F(u); }

inline Vector grad_E(const Problem& p, const Vector& u) { return p.grad_h(u) + p.grad_f(u); }

/// E(u + w) − E(u), through the problem's difference hooks when present.
inline double energy_delta(const Problem& p, const Vector& u, const Vector& w)
{
    const double dh = p.delta_H ? p.delta_H(u, w) : p.eval_H(u + w) - p.eval_H(u);
    const double df = p.delta_F ? p.delta_F(u, w) : p.eval_F(u + w) - p.eval_F(u);
    return dh + df;
}

/// ‖∇E(u)‖, or the minimal subgradient norm when H is nonsmooth.
inline double stationarity(const Problem& p, const Vector& u)
{
    if (p.stationarity_norm)
        return p.stationarity_norm(u);
    if (p.smooth())
        return grad_E(p, u).norm();
    return std::numeric_limits<double>::quiet_NaN();
}

/// Two-step history (uⁿ, uⁿ⁻¹, δt).
struct SurrogateState
{
    Vector u_n;
    Vector u_nm1;
    double dt = 0.0;
};

/// Eⁿ, Hⁿ, Fⁿ and gradients bound to one history; f(uⁿ) − f(uⁿ⁻¹) is cached.
class SurrogateEnergy
{
  public:
    SurrogateEnergy(const Problem& p, const SurrogateState& s) : p_(&p), s_(s)
    {
        if (!(s.dt > 0.0))
            throw StructuralError("surrogate energy requires dt > 0");
        require_same_size(s.u_n.size(), s.u_nm1.size(), "SurrogateState");
        f_n_ = p.grad_f(s.u_n);
        df_ = f_n_ - p.grad_f(s.u_nm1);
    }

    double Hn(const Vector& u) const { return p_->eval_H(u) + (u - s_.u_n).squaredNorm() / s_.dt; }

    double Fn(const Vector& u) const
    {
        const Vector w = u - s_.u_nm1;
        return w.squaredNorm() / (3.0 * s_.dt) - p_->eval_F(u) - df_.dot(w);
    }

    double En(const Vector& u) const
    {
        const Vector w = u - s_.u_nm1;
        return p_->eval_H(u) + (u - s_.u_n).squaredNorm() / s_.dt - w.squaredNorm() / (3.0 * s_.dt) +
               p_->eval_F(u) + df_.dot(w);
    }

    /// Eⁿ(y + w) − Eⁿ(y).
    double En_delta(const Vector& y, const Vector& w) const
    {
        const double ww = w.squaredNorm();
        return energy_delta(*p_, y, w) + (2.0 * (y - s_.u_n).dot(w) + ww) / s_.dt -
               (2.0 * (y - s_.u_nm1).dot(w) + ww) / (3.0 * s_.dt) + df_.dot(w);
    }

    Vector grad_Hn(const Vector& u) const { return p_->grad_h(u) + (2.0 / s_.dt) * (u - s_.u_n); }

    Vector grad_Fn(const Vector& u) const
    {
        return (2.0 / (3.0 * s_.dt)) * (u - s_.u_nm1) - p_->grad_f(u) - df_;
    }

    Vector grad_En(const Vector& y) const
    {
        return p_->grad_h(y) + (2.0 / s_.dt) * (y - s_.u_n) - (2.0 / (3.0 * s_.dt)) * (y - s_.u_nm1) +
               p_->grad_f(y) + df_;
    }

    /// ∇Fⁿ(uⁿ) = (2/(3δt))(uⁿ − uⁿ⁻¹) − 2f(uⁿ) + f(uⁿ⁻¹).
    Vector grad_Fn_at_un() const
    {
        return (2.0 / (3.0 * s_.dt)) * (s_.u_n - s_.u_nm1) - f_n_ - df_;
    }

    const Vector& f_difference() const { return df_; }
    const Vector& f_at_un() const { return f_n_; }
    const SurrogateState& state() const { return s_; }
    const Problem& problem() const { return *p_; }

  private:
    const Problem* p_;
    SurrogateState s_;
    Vector f_n_;
    Vector df_;
};

inline double surrogate_En(const SurrogateState& s, const Problem& p, const Vector& u)
{
    return SurrogateEnergy(p, s).En(u);
}

inline Vector grad_En_at(const SurrogateState& s, const Problem& p, const Vector& y)
{
    return SurrogateEnergy(p, s).grad_En(y);
}

/// Lyapunov coefficient C₀ = L/2 + 1/(3δt).
inline double lyapunov_coefficient(double dt, double lipschitz) { return 0.5 * lipschitz + 1.0 / (3.0 * dt); }

/// A(x, y) = E(x) + C₀‖x − y‖², plus (1/6)‖x − y‖²_M when `m_norm` is given.
inline double lyapunov(const Problem& p, double dt, const Vector& x, const Vector& y,
                       const std::function<double(const Vector&)>& m_norm = {}, double lipschitz = -1.0)
{
    const double lip = lipschitz >= 0.0 ? lipschitz : p.lipschitz_L;
    const Vector diff = x - y;
    double value = energy_E(p, x) + lyapunov_coefficient(dt, lip) * diff.squaredNorm();
    if (m_norm)
        value += m_norm(diff) / 6.0;
    return value;
}

inline double lyapunov(const SurrogateState& s, const Problem& p, const Vector& x, const Vector& y,
                       const LinearOperator* m = nullptr)
{
    if (m == nullptr)
        return lyapunov(p, s.dt, x, y);
    return lyapunov(p, s.dt, x, y, [m](const Vector& v) { return m_norm_sq(*m, v); });
}

/// Largest admissible step, 2/(3L).
inline double dt_bound(double lipschitz)
{
    if (!(lipschitz > 0.0))
        throw StructuralError("dt_bound requires L > 0");
    return 2.0 / (3.0 * lipschitz);
}

inline double dt_bound(const Problem& p) { return dt_bound(p.lipschitz_L); }

} // namespace dcsplit

#endif
