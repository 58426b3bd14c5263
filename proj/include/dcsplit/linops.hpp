#ifndef DCSPLIT_LINOPS_HPP
#define DCSPLIT_LINOPS_HPP

// Vectors, symmetric linear operators and the Krylov kernels shared by the
// splitting solver and its baselines.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace dcsplit {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
/// Row-major sparse storage holding the lower triangle (diagonal included).
using SparseLower = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// Raised for violated preconditions on shapes, signs and model structure.
class StructuralError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

inline bool all_finite(const Vector& x) { return x.allFinite(); }

inline void require_finite(const Vector& x, const char* what)
{
    if (!x.allFinite())
        throw StructuralError(std::string(what) + ": non-finite entry");
}

inline void require_same_size(Index a, Index b, const char* what)
{
    if (a != b)
        throw StructuralError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                              std::to_string(b) + ")");
}

class LinearOperator
{
  public:
    enum class Kind
    {
        dense,
        diagonal,
        sparse_symmetric,
        gram,
        composite
    };

    LinearOperator() : data_(std::make_shared<const DiagData>()) {}

    static LinearOperator dense(DenseMatrix m)
    {
        if (m.rows() != m.cols())
            throw StructuralError("dense operator must be square");
        LinearOperator op;
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        op.symmetric_ = m.rows() == 0 || (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale;
        op.size_ = m.rows();
        op.data_ = std::make_shared<const DenseMatrix>(std::move(m));
        return op;
    }

    static LinearOperator diagonal(Vector d)
    {
        LinearOperator op;
        op.size_ = d.size();
        op.symmetric_ = true;
        op.psd_ = d.size() == 0 || d.minCoeff() >= 0.0;
        op.data_ = std::make_shared<const DiagData>(DiagData{std::move(d)});
        return op;
    }

    static LinearOperator identity(Index n) { return diagonal(Vector::Ones(n)); }
    static LinearOperator zero(Index n) { return diagonal(Vector::Zero(n)); }

    /// `lower` must hold only entries with col <= row.
    static LinearOperator sparse_symmetric(SparseLower lower, bool psd = false)
    {
        if (lower.rows() != lower.cols())
            throw StructuralError("sparse operator must be square");
        for (Index r = 0; r < lower.outerSize(); ++r)
            for (SparseLower::InnerIterator it(lower, r); it; ++it)
                if (it.col() > it.row())
                    throw StructuralError("sparse symmetric storage must be lower triangular");
        lower.makeCompressed();
        LinearOperator op;
        op.size_ = lower.rows();
        op.symmetric_ = true;
        op.psd_ = psd;
        op.data_ = std::make_shared<const SparseLower>(std::move(lower));
        return op;
    }

    /// Normal-equations operator x -> Aᵀ(Ax), never formed explicitly.
    static LinearOperator gram(DenseMatrix a)
    {
        LinearOperator op;
        op.size_ = a.cols();
        op.symmetric_ = true;
        op.psd_ = true;
        op.data_ = std::make_shared<const GramData>(GramData{std::move(a)});
        return op;
    }

    Kind kind() const
    {
        return std::visit(
            [](const auto& p) {
                using T = std::decay_t<decltype(*p)>;
                if constexpr (std::is_same_v<T, DenseMatrix>)
                    return Kind::dense;
                else if constexpr (std::is_same_v<T, DiagData>)
                    return Kind::diagonal;
                else if constexpr (std::is_same_v<T, SparseLower>)
                    return Kind::sparse_symmetric;
                else if constexpr (std::is_same_v<T, GramData>)
                    return Kind::gram;
                else
                    return Kind::composite;
            },
            data_);
    }

    Index size() const { return size_; }
    bool symmetric() const { return symmetric_; }
    /// Declared (not verified) positive semidefiniteness.
    bool declared_psd() const { return psd_; }
    LinearOperator with_psd(bool psd) const
    {
        LinearOperator copy = *this;
        copy.psd_ = psd;
        return copy;
    }

    void apply_to(const Vector& x, Vector& y) const
    {
        require_same_size(x.size(), size_, "LinearOperator::apply");
        std::visit([&](const auto& p) { apply_impl(*p, x, y); }, data_);
    }

    Vector apply(const Vector& x) const
    {
        Vector y(size_);
        apply_to(x, y);
        return y;
    }

    Vector operator*(const Vector& x) const { return apply(x); }

    Vector diagonal_entries() const
    {
        return std::visit([&](const auto& p) { return diag_impl(*p); }, data_);
    }

    /// Lower triangle (diagonal included) in sparse row-major form.
    SparseLower lower_triangle() const
    {
        if (!symmetric_)
            throw StructuralError("lower_triangle requires a symmetric operator");
        return std::visit([&](const auto& p) { return lower_impl(*p); }, data_);
    }

    DenseMatrix to_dense() const
    {
        DenseMatrix out(size_, size_);
        Vector e = Vector::Zero(size_);
        for (Index j = 0; j < size_; ++j)
        {
            e[j] = 1.0;
            out.col(j) = apply(e);
            e[j] = 0.0;
        }
        return out;
    }

    friend LinearOperator operator+(const LinearOperator& a, const LinearOperator& b)
    {
        require_same_size(a.size_, b.size_, "operator+");
        if (a.kind() == Kind::diagonal && b.kind() == Kind::diagonal)
            return diagonal(a.diagonal_entries() + b.diagonal_entries());
        CompositeData c;
        append_terms(c, 1.0, a);
        append_terms(c, 1.0, b);
        return make_composite(std::move(c), a.size_, a.symmetric_ && b.symmetric_, a.psd_ && b.psd_);
    }

    friend LinearOperator operator*(double s, const LinearOperator& a)
    {
        if (a.kind() == Kind::diagonal)
            return diagonal(s * a.diagonal_entries()).with_psd(s >= 0.0 && a.psd_);
        CompositeData c;
        append_terms(c, s, a);
        return make_composite(std::move(c), a.size_, a.symmetric_, s >= 0.0 && a.psd_);
    }

    friend LinearOperator operator-(const LinearOperator& a, const LinearOperator& b)
    {
        LinearOperator out = a + (-1.0) * b;
        return out.with_psd(false);
    }

    const DenseMatrix* dense_data() const
    {
        auto p = std::get_if<std::shared_ptr<const DenseMatrix>>(&data_);
        return p ? p->get() : nullptr;
    }

  private:
    struct DiagData
    {
        Vector d;
    };
    struct GramData
    {
        DenseMatrix a;
    };
    struct CompositeData
    {
        std::vector<std::pair<double, LinearOperator>> terms;
    };

    using Storage = std::variant<std::shared_ptr<const DenseMatrix>, std::shared_ptr<const DiagData>,
                                 std::shared_ptr<const SparseLower>, std::shared_ptr<const GramData>,
                                 std::shared_ptr<const CompositeData>>;

    static void append_terms(CompositeData& c, double s, const LinearOperator& op)
    {
        if (auto p = std::get_if<std::shared_ptr<const CompositeData>>(&op.data_))
        {
            for (const auto& [w, t] : (*p)->terms)
                c.terms.emplace_back(s * w, t);
            return;
        }
        c.terms.emplace_back(s, op);
    }

    static LinearOperator make_composite(CompositeData c, Index n, bool sym, bool psd)
    {
        LinearOperator op;
        op.size_ = n;
        op.symmetric_ = sym;
        op.psd_ = psd;
        op.data_ = std::make_shared<const CompositeData>(std::move(c));
        return op;
    }

    static void apply_impl(const DenseMatrix& m, const Vector& x, Vector& y) { y.noalias() = m * x; }
    static void apply_impl(const DiagData& d, const Vector& x, Vector& y) { y = d.d.cwiseProduct(x); }
    static void apply_impl(const SparseLower& l, const Vector& x, Vector& y)
    {
        y.noalias() = l.selfadjointView<Eigen::Lower>() * x;
    }
    static void apply_impl(const GramData& g, const Vector& x, Vector& y)
    {
        const Vector ax = g.a * x;
        y.noalias() = g.a.transpose() * ax;
    }
    static void apply_impl(const CompositeData& c, const Vector& x, Vector& y)
    {
        y.setZero(x.size());
        Vector tmp(x.size());
        for (const auto& [w, t] : c.terms)
        {
            t.apply_to(x, tmp);
            y += w * tmp;
        }
    }

    static Vector diag_impl(const DenseMatrix& m) { return m.diagonal(); }
    static Vector diag_impl(const DiagData& d) { return d.d; }
    static Vector diag_impl(const SparseLower& l) { return l.diagonal(); }
    static Vector diag_impl(const GramData& g) { return g.a.colwise().squaredNorm().transpose(); }
    static Vector diag_impl(const CompositeData& c)
    {
        Vector d = Vector::Zero(c.terms.empty() ? 0 : c.terms.front().second.size());
        for (const auto& [w, t] : c.terms)
            d += w * t.diagonal_entries();
        return d;
    }

    static SparseLower dense_lower(const DenseMatrix& m)
    {
        std::vector<Triplet> trips;
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j <= i; ++j)
                if (m(i, j) != 0.0)
                    trips.emplace_back(i, j, m(i, j));
        SparseLower out(m.rows(), m.cols());
        out.setFromTriplets(trips.begin(), trips.end());
        return out;
    }
    static SparseLower lower_impl(const DenseMatrix& m) { return dense_lower(m); }
    static SparseLower lower_impl(const DiagData& d)
    {
        SparseLower out(d.d.size(), d.d.size());
        std::vector<Triplet> trips;
        for (Index i = 0; i < d.d.size(); ++i)
            trips.emplace_back(i, i, d.d[i]);
        out.setFromTriplets(trips.begin(), trips.end());
        return out;
    }
    static SparseLower lower_impl(const SparseLower& l) { return l; }
    static SparseLower lower_impl(const GramData& g)
    {
        const DenseMatrix ata = g.a.transpose() * g.a;
        return dense_lower(ata);
    }
    static SparseLower lower_impl(const CompositeData& c)
    {
        const Index n = c.terms.empty() ? 0 : c.terms.front().second.size();
        SparseLower out(n, n);
        for (const auto& [w, t] : c.terms)
            out += w * t.lower_triangle();
        out.prune(0.0);
        return out;
    }

    Storage data_;
    Index size_ = 0;
    bool symmetric_ = true;
    bool psd_ = false;
};

/// ⟨Mx, x⟩.
inline double m_norm_sq(const LinearOperator& m, const Vector& x) { return x.dot(m.apply(x)); }

struct CgResult
{
    Vector x;
    int iterations = 0;
    double residual_norm = 0.0;
    bool converged = false;
};

/// Conjugate gradients for SPD `t`; stops at ‖Tx − b‖ ≤ tol·max(1, ‖b‖).
template <typename Apply>
    requires std::is_invocable_r_v<Vector, Apply&, const Vector&>
CgResult cg_solve(Apply&& apply_t, const Vector& b, const Vector& x0, double tol, int maxit)
{
    require_same_size(b.size(), x0.size(), "cg_solve");
    CgResult res;
    res.x = x0;
    const double target = tol * std::max(1.0, b.norm());
    Vector r = b - apply_t(res.x);
    double rr = r.squaredNorm();
    res.residual_norm = std::sqrt(rr);
    if (res.residual_norm <= target)
    {
        res.converged = true;
        return res;
    }
    Vector p = r;
    Vector q(b.size());
    for (int it = 1; it <= maxit; ++it)
    {
        q = apply_t(p);
        const double pq = p.dot(q);
        if (!(pq > 0.0))
            throw StructuralError("cg_solve: operator is not positive definite");
        const double step = rr / pq;
        res.x.noalias() += step * p;
        r.noalias() -= step * q;
        const double rr_new = r.squaredNorm();
        res.iterations = it;
        res.residual_norm = std::sqrt(rr_new);
        if (res.residual_norm <= target)
        {
            res.converged = true;
            return res;
        }
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return res;
}

inline CgResult cg_solve(const LinearOperator& t, const Vector& b, const Vector& x0, double tol, int maxit)
{
    require_same_size(t.size(), b.size(), "cg_solve");
    return cg_solve([&](const Vector& v) { return t.apply(v); }, b, x0, tol, maxit);
}

/// L_w = D_w − W for symmetric, nonnegative, zero-diagonal weights.
inline LinearOperator graph_laplacian(const Eigen::SparseMatrix<double>& w)
{
    if (w.rows() != w.cols())
        throw StructuralError("graph_laplacian: weights must be square");
    const Eigen::SparseMatrix<double> wt = w.transpose();
    if ((w - wt).cwiseAbs().sum() > 1e-12 * std::max(1.0, w.cwiseAbs().sum()))
        throw StructuralError("graph_laplacian: weights must be symmetric");
    const Index n = w.rows();
    Vector degree = Vector::Zero(n);
    std::vector<Triplet> trips;
    for (Index c = 0; c < w.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(w, c); it; ++it)
        {
            if (it.value() < 0.0)
                throw StructuralError("graph_laplacian: negative weight");
            if (it.row() == it.col())
            {
                if (it.value() != 0.0)
                    throw StructuralError("graph_laplacian: nonzero diagonal weight");
                continue;
            }
            degree[it.row()] += it.value();
            if (it.row() > it.col())
                trips.emplace_back(it.row(), it.col(), -it.value());
        }
    for (Index i = 0; i < n; ++i)
        trips.emplace_back(i, i, degree[i]);
    SparseLower lower(n, n);
    lower.setFromTriplets(trips.begin(), trips.end());
    return LinearOperator::sparse_symmetric(std::move(lower), true);
}

inline LinearOperator graph_laplacian(const DenseMatrix& w)
{
    return graph_laplacian(Eigen::SparseMatrix<double>(w.sparseView()));
}

inline Vector seeded_probe(Index n, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i)
        v[i] = normal(gen);
    return v;
}

struct EigenEstimate
{
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
template <typename Apply>
EigenEstimate power_iteration(Apply&& apply, Index n, double rel_tol = 1e-8, int maxit = 1000,
                              std::uint64_t seed = 0x5eed)
{
    EigenEstimate est;
    if (n == 0)
    {
        est.converged = true;
        return est;
    }
    Vector v = seeded_probe(n, seed);
    v.normalize();
    double prev = 0.0;
    for (int it = 1; it <= maxit; ++it)
    {
        Vector w = apply(v);
        const double rq = v.dot(w);
        est.value = rq;
        est.iterations = it;
        const double wn = w.norm();
        if (wn == 0.0)
        {
            est.converged = true;
            return est;
        }
        if (it > 1 && std::abs(rq - prev) <= rel_tol * std::abs(rq))
        {
            est.converged = true;
            return est;
        }
        prev = rq;
        v = w / wn;
    }
    return est;
}

inline EigenEstimate power_iteration(const LinearOperator& op, double rel_tol = 1e-8, int maxit = 1000)
{
    return power_iteration([&](const Vector& v) { return op.apply(v); }, op.size(), rel_tol, maxit);
}

/// Gauss quadrature estimate of wᵀ f(S) w by Lanczos with full
/// reorthogonalization; S symmetric, given by its action.
template <typename Apply, typename Fn>
double lanczos_quadratic_form(Apply&& apply_s, const Vector& w, Fn&& f, int max_steps = 80,
                              double rel_tol = 1e-14)
{
    const double wn2 = w.squaredNorm();
    if (wn2 == 0.0)
        return 0.0;
    const Index n = w.size();
    const int steps = static_cast<int>(std::min<Index>(max_steps, n));
    std::vector<Vector> basis;
    basis.reserve(steps);
    basis.push_back(w / std::sqrt(wn2));
    std::vector<double> alpha;
    std::vector<double> beta;
    double previous = 0.0;

    auto estimate = [&]() {
        const Index m = static_cast<Index>(alpha.size());
        DenseMatrix tri = DenseMatrix::Zero(m, m);
        for (Index i = 0; i < m; ++i)
        {
            tri(i, i) = alpha[i];
            if (i + 1 < m)
                tri(i, i + 1) = tri(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(tri);
        double sum = 0.0;
        for (Index j = 0; j < m; ++j)
        {
            const double z = es.eigenvectors()(0, j);
            sum += z * z * f(es.eigenvalues()[j]);
        }
        return wn2 * sum;
    };

    for (int k = 0; k < steps; ++k)
    {
        Vector v = apply_s(basis[k]);
        const double a = basis[k].dot(v);
        alpha.push_back(a);
        v -= a * basis[k];
        if (k > 0)
            v -= beta[k - 1] * basis[k - 1];
        for (const auto& q : basis)
            v -= q.dot(v) * q;
        const double b = v.norm();
        const double current = estimate();
        const bool breakdown = b <= 1e-13 * std::abs(a) || b == 0.0;
        if (breakdown || (k >= 4 && std::abs(current - previous) <= rel_tol * std::abs(current) + 1e-300))
            return current;
        previous = current;
        beta.push_back(b);
        basis.push_back(v / b);
    }
    return estimate();
}

} // namespace dcsplit

#endif
