#ifndef DCSPLIT_PRECOND_HPP
#define DCSPLIT_PRECOND_HPP

// Classical preconditioners for the linear subproblem T y = bⁿ with
// T = (2/δt)I + A. One sweep y = û + 𝕄⁻¹(bⁿ − Tû) is the proximal step with
// weight M = 𝕄 − T.

#include "dcsplit/linops.hpp"
#include "dcsplit/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dcsplit {

enum class PreconditionerKind
{
    exact,
    jacobi,
    sgs,
    richardson
};

inline std::string to_string(PreconditionerKind k)
{
    switch (k)
    {
    case PreconditionerKind::exact:
        return "exact";
    case PreconditionerKind::jacobi:
        return "jacobi";
    case PreconditionerKind::sgs:
        return "sgs";
    case PreconditionerKind::richardson:
        return "richardson";
    }
    return "unknown";
}

inline PreconditionerKind preconditioner_kind_from_string(const std::string& s)
{
    if (s == "exact")
        return PreconditionerKind::exact;
    if (s == "jacobi")
        return PreconditionerKind::jacobi;
    if (s == "sgs")
        return PreconditionerKind::sgs;
    if (s == "richardson")
        return PreconditionerKind::richardson;
    throw StructuralError("unknown preconditioner '" + s + "'");
}

struct PreconditionerSpec
{
    PreconditionerKind kind = PreconditionerKind::exact;
    int sweeps = 1;
    double cg_tol = 1e-12;
    int cg_maxit = 20000;
    /// Jacobi scaling c̃; chosen automatically when empty.
    std::optional<double> c_tilde;
    /// Richardson shift; λ_max(A) by power iteration when empty.
    std::optional<double> lambda_shift;

    static PreconditionerSpec exact(double tol = 1e-12)
    {
        PreconditionerSpec s;
        s.cg_tol = tol;
        return s;
    }
    static PreconditionerSpec jacobi(std::optional<double> c = std::nullopt, int sweeps = 1)
    {
        PreconditionerSpec s;
        s.kind = PreconditionerKind::jacobi;
        s.c_tilde = c;
        s.sweeps = sweeps;
        return s;
    }
    static PreconditionerSpec sgs(int sweeps = 1)
    {
        PreconditionerSpec s;
        s.kind = PreconditionerKind::sgs;
        s.sweeps = sweeps;
        return s;
    }
    static PreconditionerSpec richardson(std::optional<double> shift = std::nullopt, int sweeps = 1)
    {
        PreconditionerSpec s;
        s.kind = PreconditionerKind::richardson;
        s.lambda_shift = shift;
        s.sweeps = sweeps;
        return s;
    }
};

/// T = (2/δt)I + A, keeping the storage class of A where possible.
inline LinearOperator build_T(const LinearOperator& a, double dt)
{
    if (!(dt > 0.0))
        throw StructuralError("build_T requires dt > 0");
    const double shift = 2.0 / dt;
    const Index n = a.size();
    switch (a.kind())
    {
    case LinearOperator::Kind::diagonal:
        return LinearOperator::diagonal(a.diagonal_entries().array() + shift);
    case LinearOperator::Kind::dense:
    {
        DenseMatrix m = *a.dense_data();
        m.diagonal().array() += shift;
        return LinearOperator::dense(std::move(m)).with_psd(true);
    }
    case LinearOperator::Kind::sparse_symmetric:
    {
        SparseLower lower = a.lower_triangle();
        SparseLower id(n, n);
        id.setIdentity();
        lower += shift * id;
        return LinearOperator::sparse_symmetric(std::move(lower), true);
    }
    default:
        return (shift * LinearOperator::identity(n) + a).with_psd(true);
    }
}

/// bⁿ = b₀ + (2/(3δt))(4uⁿ − uⁿ⁻¹) − (2f(uⁿ) − f(uⁿ⁻¹)).
inline Vector rhs_bn(const SurrogateState& s, const Vector& b0, const Vector& f_n, const Vector& f_nm1)
{
    return b0 + (2.0 / (3.0 * s.dt)) * (4.0 * s.u_n - s.u_nm1) - (2.0 * f_n - f_nm1);
}

inline Vector rhs_bn(const SurrogateState& s, const Problem& p)
{
    if (!p.linear)
        throw StructuralError("rhs_bn requires a problem with a linear part h(u) = Au - b0");
    return rhs_bn(s, p.linear->b0, p.grad_f(s.u_n), p.grad_f(s.u_nm1));
}

/// T = D − E − Eᵀ with D diagonal and E strictly lower triangular.
struct SgsFactors
{
    Vector d;
    SparseLower e;
};

inline SgsFactors sgs_factors(const LinearOperator& t)
{
    SparseLower lower = t.lower_triangle();
    SgsFactors f;
    f.d = lower.diagonal();
    for (Index i = 0; i < f.d.size(); ++i)
        if (!(f.d[i] > 0.0))
            throw StructuralError("sgs_factors: nonpositive diagonal entry at " + std::to_string(i));
    SparseLower strict = lower.triangularView<Eigen::StrictlyLower>();
    f.e = -strict;
    f.e.makeCompressed();
    return f;
}

/// Row sums of |offdiagonal| for a symmetric operator.
inline Vector offdiagonal_abs_row_sums(const SparseLower& lower)
{
    Vector sums = Vector::Zero(lower.rows());
    for (Index r = 0; r < lower.outerSize(); ++r)
        for (SparseLower::InnerIterator it(lower, r); it; ++it)
            if (it.col() != it.row())
            {
                sums[it.row()] += std::abs(it.value());
                sums[it.col()] += std::abs(it.value());
            }
    return sums;
}

/// True iff c̃·Diag(A) − A ⪰ 0 (to −1e-10). Certified by diagonal dominance
/// when possible, otherwise estimated by shifted power iteration.
inline bool jacobi_feasibility(const LinearOperator& a, double c_tilde)
{
    const SparseLower lower = a.lower_triangle();
    const Vector diag = lower.diagonal();
    const Vector off = offdiagonal_abs_row_sums(lower);
    for (Index i = 0; i < diag.size(); ++i)
        if (diag[i] == 0.0 && off[i] > 0.0)
            return false;
    bool dominant = true;
    for (Index i = 0; i < diag.size() && dominant; ++i)
        dominant = (c_tilde - 1.0) * diag[i] >= off[i] * (1.0 - 1e-14);
    if (dominant)
        return true;

    // B = c̃ D − A; λ_min(B) = σ − λ_max(σI − B) with σ a Gershgorin bound.
    const Vector b_diag = (c_tilde - 1.0) * diag;
    double sigma = 0.0;
    for (Index i = 0; i < diag.size(); ++i)
        sigma = std::max(sigma, std::abs(b_diag[i]) + off[i]);
    auto shifted = [&](const Vector& v) -> Vector {
        const Vector av = lower.selfadjointView<Eigen::Lower>() * v;
        const Vector bv = c_tilde * diag.cwiseProduct(v) - av;
        return sigma * v - bv;
    };
    const EigenEstimate top = power_iteration(shifted, a.size(), 1e-13, 20000, 0x6a3b1);
    const double lambda_min = sigma - top.value;
    return lambda_min >= -1e-10;
}

/// Smallest power of two c̃ ≥ 1 passing jacobi_feasibility.
inline double select_jacobi_c(const LinearOperator& a)
{
    double c = 1.0;
    for (int i = 0; i < 40; ++i, c *= 2.0)
        if (jacobi_feasibility(a, c))
            return c;
    throw StructuralError("select_jacobi_c: no feasible scaling found");
}

/// A preconditioner bound to one T.
class Preconditioner
{
  public:
    /// Binds to T = (2/δt)I + A.
    static Preconditioner bind(const PreconditionerSpec& spec, const LinearOperator& a, double dt)
    {
        Preconditioner pc = bind_system(spec, build_T(a, dt), &a, dt);
        return pc;
    }

    /// Binds to a given T; Jacobi and Richardson additionally need A and δt.
    static Preconditioner bind_system(const PreconditionerSpec& spec, LinearOperator t,
                                      const LinearOperator* a = nullptr, double dt = 0.0)
    {
        if (spec.sweeps < 1)
            throw StructuralError("preconditioner sweeps must be >= 1");
        Preconditioner pc;
        pc.spec_ = spec;
        pc.t_ = std::move(t);
        pc.dt_ = dt;
        const Index n = pc.t_.size();
        switch (spec.kind)
        {
        case PreconditionerKind::exact:
            break;
        case PreconditionerKind::sgs:
        {
            SgsFactors f = sgs_factors(pc.t_);
            pc.d_ = f.d;
            pc.lower_ = pc.t_.lower_triangle();
            pc.e_ = std::move(f.e);
            if (pc.e_.nonZeros() == 0)
                pc.diag_ = pc.d_;
            break;
        }
        case PreconditionerKind::jacobi:
        {
            if (a == nullptr || !(dt > 0.0))
                throw StructuralError("Jacobi preconditioner needs A and dt");
            pc.a_ = *a;
            pc.c_tilde_ = spec.c_tilde ? *spec.c_tilde : select_jacobi_c(*a);
            pc.diag_ = Vector::Constant(n, 2.0 / dt) + pc.c_tilde_ * a->diagonal_entries();
            for (Index i = 0; i < n; ++i)
                if (!(pc.diag_[i] > 0.0))
                    throw StructuralError("Jacobi preconditioner has a nonpositive diagonal");
            break;
        }
        case PreconditionerKind::richardson:
        {
            if (a == nullptr || !(dt > 0.0))
                throw StructuralError("Richardson preconditioner needs A and dt");
            pc.a_ = *a;
            pc.lambda_shift_ = spec.lambda_shift ? *spec.lambda_shift : richardson_shift(*a);
            pc.diag_ = Vector::Constant(n, 2.0 / dt + pc.lambda_shift_);
            break;
        }
        }
        return pc;
    }

    /// λ_max(A) from power iteration, nudged up by 1e-6 relative so that
    /// λI − A stays positive semidefinite despite the estimate's error.
    static double richardson_shift(const LinearOperator& a)
    {
        const EigenEstimate est = power_iteration(a, 1e-8, 1000);
        return est.value * (1.0 + 1e-6);
    }

    PreconditionerKind kind() const { return spec_.kind; }
    const PreconditionerSpec& spec() const { return spec_; }
    int sweeps() const { return spec_.kind == PreconditionerKind::exact ? 1 : spec_.sweeps; }
    const LinearOperator& T() const { return t_; }
    double c_tilde() const { return c_tilde_; }
    double lambda_shift() const { return lambda_shift_; }
    /// 𝕄 is diagonal (Jacobi, Richardson, SGS on diagonal T).
    bool is_diagonal() const { return diag_.size() > 0; }
    const Vector& diagonal_values() const { return diag_; }

    /// 𝕄⁻¹ r.
    Vector apply_inverse(const Vector& r) const
    {
        require_same_size(r.size(), t_.size(), "Preconditioner::apply_inverse");
        switch (spec_.kind)
        {
        case PreconditionerKind::exact:
        {
            const CgResult res = cg_solve(t_, r, Vector::Zero(r.size()), spec_.cg_tol, spec_.cg_maxit);
            return res.x;
        }
        case PreconditionerKind::sgs:
        {
            if (is_diagonal())
                return r.cwiseQuotient(diag_);
            Vector z = lower_.triangularView<Eigen::Lower>().solve(r);
            z = z.cwiseProduct(d_);
            return lower_.transpose().triangularView<Eigen::Upper>().solve(z);
        }
        default:
            return r.cwiseQuotient(diag_);
        }
    }

    /// 𝕄x.
    Vector apply_big_M(const Vector& x) const { return t_.apply(x) + apply_M(x); }

    /// Mx = (𝕄 − T)x for a single sweep, never forming M.
    Vector apply_M(const Vector& x) const
    {
        require_same_size(x.size(), t_.size(), "implicit_M_apply");
        switch (spec_.kind)
        {
        case PreconditionerKind::exact:
            return Vector::Zero(x.size());
        case PreconditionerKind::sgs:
        {
            if (e_.nonZeros() == 0)
                return Vector::Zero(x.size());
            Vector z = e_.transpose() * x;
            z = z.cwiseQuotient(d_);
            return e_ * z;
        }
        case PreconditionerKind::jacobi:
            return c_tilde_ * a_.diagonal_entries().cwiseProduct(x) - a_.apply(x);
        case PreconditionerKind::richardson:
            return lambda_shift_ * x - a_.apply(x);
        }
        return Vector::Zero(x.size());
    }

    /// ‖v‖²_M for the weight realized by `sweeps()` stationary sweeps.
    double m_norm_sq(const Vector& v) const
    {
        if (spec_.kind == PreconditionerKind::exact)
            return 0.0;
        if (sweeps() == 1)
            return v.dot(apply_M(v));
        return multi_sweep_m_norm_sq(v);
    }

  private:
    // k sweeps realize 𝕄ₖ⁻¹ = (I − (I − 𝕄⁻¹T)ᵏ)T⁻¹. With 𝕄 = CCᵀ and
    // S = C⁻¹TC⁻ᵀ, ‖v‖²_{𝕄ₖ−T} = wᵀψ(S)w for w = Cᵀv and
    // ψ(σ) = σ(1−σ)ᵏ / (1 − (1−σ)ᵏ).
    double multi_sweep_m_norm_sq(const Vector& v) const
    {
        const int k = sweeps();
        auto psi = [k](double sigma) {
            sigma = std::clamp(sigma, 0.0, 1.0);
            if (sigma < 1e-300)
                return 1.0 / k;
            const double log_q = std::log1p(-sigma);
            if (sigma == 1.0)
                return 0.0;
            const double qk = std::exp(k * log_q);
            const double denom = -std::expm1(k * log_q);
            return sigma * qk / denom;
        };
        if (is_diagonal())
        {
            const Vector root = diag_.cwiseSqrt();
            const Vector w = root.cwiseProduct(v);
            auto apply_s = [&](const Vector& x) -> Vector {
                return t_.apply(x.cwiseQuotient(root)).cwiseQuotient(root);
            };
            return lanczos_quadratic_form(apply_s, w, psi);
        }
        // SGS: C = L_T D^{-1/2}, L_T the lower triangle of T.
        const Vector root_d = d_.cwiseSqrt();
        const Vector w = (lower_.transpose() * v).cwiseQuotient(root_d);
        auto apply_s = [&](const Vector& x) -> Vector {
            const Vector y = lower_.transpose().triangularView<Eigen::Upper>().solve(Vector(root_d.cwiseProduct(x)));
            const Vector ty = t_.apply(y);
            return root_d.cwiseProduct(lower_.triangularView<Eigen::Lower>().solve(ty));
        };
        return lanczos_quadratic_form(apply_s, w, psi);
    }

    PreconditionerSpec spec_;
    LinearOperator t_;
    LinearOperator a_;
    double dt_ = 0.0;
    double c_tilde_ = 0.0;
    double lambda_shift_ = 0.0;
    Vector diag_;
    Vector d_;
    SparseLower lower_;
    SparseLower e_;
};

inline Vector implicit_M_apply(const Preconditioner& pc, const Vector& x) { return pc.apply_M(x); }

struct SubproblemSystem
{
    LinearOperator t;
    Vector b_n;
    Vector u_hat;
};

/// `sweeps` stationary steps y ← y + 𝕄⁻¹(bⁿ − Ty) from û; the exact variant
/// solves Tδ = bⁿ − Tû by CG.
inline Vector precond_sweep(const SubproblemSystem& sys, const Preconditioner& pc)
{
    require_same_size(sys.b_n.size(), sys.u_hat.size(), "precond_sweep");
    if (pc.kind() == PreconditionerKind::exact)
    {
        // Solve for the correction at unit scale so the tolerance stays relative.
        const Vector r = sys.b_n - sys.t.apply(sys.u_hat);
        const double scale = r.norm();
        if (scale == 0.0)
            return sys.u_hat;
        const CgResult res = cg_solve(sys.t, Vector(r / scale), Vector::Zero(r.size()), pc.spec().cg_tol,
                                      pc.spec().cg_maxit);
        if (!res.converged)
            throw StructuralError("precond_sweep: CG did not converge");
        return sys.u_hat + scale * res.x;
    }
    Vector y = sys.u_hat;
    for (int s = 0; s < pc.sweeps(); ++s)
    {
        const Vector r = sys.b_n - sys.t.apply(y);
        y += pc.apply_inverse(r);
    }
    require_finite(y, "precond_sweep");
    return y;
}

struct OrderRow
{
    double dt = 0.0;
    double max_norm = 0.0;
};

struct OrderDiagnostic
{
    std::vector<OrderRow> rows;
    /// Least-squares slope of log max‖M(yⁿ − ûⁿ)‖ against log δt; 0 when M ≡ 0.
    double slope = 0.0;
    bool identically_zero = false;
};

/// Runs the unaccelerated scheme to `t_final` for each δt and fits the order of
/// the proximal perturbation ‖M(yⁿ − ûⁿ)‖. `tilde_anchor` selects
/// ûⁿ = (4/3)uⁿ − (1/3)uⁿ⁻¹ instead of uⁿ.
inline OrderDiagnostic order_diagnostic(const Problem& p, const PreconditionerSpec& spec,
                                        const std::vector<double>& dt_list, double t_final, const Vector& u0,
                                        bool tilde_anchor = false)
{
    if (!p.affine())
        throw StructuralError("order_diagnostic requires an affine h");
    OrderDiagnostic out;
    for (double dt : dt_list)
    {
        const Preconditioner pc = Preconditioner::bind(spec, p.linear->a, dt);
        SurrogateState s{u0, u0, dt};
        const int steps = static_cast<int>(std::lround(t_final / dt));
        double worst = 0.0;
        Vector f_nm1 = p.grad_f(u0);
        for (int n = 0; n < steps; ++n)
        {
            const Vector f_n = p.grad_f(s.u_n);
            const Vector u_hat = tilde_anchor ? Vector((4.0 / 3.0) * s.u_n - (1.0 / 3.0) * s.u_nm1) : s.u_n;
            const Vector b = rhs_bn(s, p.linear->b0, f_n, f_nm1);
            const Vector y = precond_sweep({pc.T(), b, u_hat}, pc);
            worst = std::max(worst, pc.apply_M(y - u_hat).norm());
            s.u_nm1 = s.u_n;
            s.u_n = y;
            f_nm1 = f_n;
        }
        out.rows.push_back({dt, worst});
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : out.rows)
        if (r.max_norm > 0.0)
            pts.emplace_back(std::log(r.dt), std::log(r.max_norm));
    if (pts.size() < 2)
    {
        out.identically_zero = pts.empty();
        return out;
    }
    double mx = 0, my = 0;
    for (auto [x, y] : pts)
    {
        mx += x;
        my += y;
    }
    mx /= pts.size();
    my /= pts.size();
    double sxy = 0, sxx = 0;
    for (auto [x, y] : pts)
    {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    out.slope = sxy / sxx;
    return out;
}

} // namespace dcsplit

#endif
