#ifndef DCSPLIT_PROBLEMS_TOY_HPP
#define DCSPLIT_PROBLEMS_TOY_HPP

// Small smooth problems with known structure, used by diagnostics and tests.

#include "dcsplit/linops.hpp"
#include "dcsplit/splitting.hpp"

#include <cstdint>
#include <memory>
#include <random>

namespace dcsplit {

/// H = ½uᵀAu − b₀ᵀu, F = 0.
inline Problem quadratic_problem(const LinearOperator& a, const Vector& b0)
{
    require_same_size(a.size(), b0.size(), "quadratic_problem");
    auto d = std::make_shared<const LinearPart>(LinearPart{a, b0});
    Problem p;
    p.name = "quadratic";
    p.dimension = a.size();
    p.eval_H = [d](const Vector& u) { return 0.5 * u.dot(d->a.apply(u)) - d->b0.dot(u); };
    p.grad_h = [d](const Vector& u) -> Vector { return d->a.apply(u) - d->b0; };
    p.eval_F = [](const Vector&) { return 0.0; };
    p.grad_f = [](const Vector& u) -> Vector { return Vector::Zero(u.size()); };
    p.delta_H = [d](const Vector& u, const Vector& w) {
        return (d->a.apply(u) - d->b0).dot(w) + 0.5 * w.dot(d->a.apply(w));
    };
    p.delta_F = [](const Vector&, const Vector&) { return 0.0; };
    p.hess_h_apply = [d](const Vector&, const Vector& v) -> Vector { return d->a.apply(v); };
    p.linear = *d;
    p.lipschitz_L = 0.0;
    return p;
}

/// E(u) = ½u² on ℝ¹.
inline Problem scalar_quadratic()
{
    DenseMatrix a(1, 1);
    a(0, 0) = 1.0;
    Problem p = quadratic_problem(LinearOperator::dense(a), Vector::Zero(1));
    p.name = "scalar_quadratic";
    return p;
}

/// H = ½uᵀAu with A = QᵀQ/n + I (Q Gaussian), F = (γ/3)Σuᵢ³.
/// L = 2γr on the box ‖u‖∞ ≤ r.
inline Problem quadratic_cubic(Index n, std::uint64_t seed, double gamma = 0.5, double box_radius = 2.0)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix q(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i)
            q(i, j) = normal(gen);
    DenseMatrix a = q.transpose() * q / static_cast<double>(n);
    a.diagonal().array() += 1.0;
    Problem p = quadratic_problem(LinearOperator::dense(a), Vector::Zero(n));
    p.name = "quadratic_cubic";
    p.eval_F = [gamma](const Vector& u) { return gamma * u.array().cube().sum() / 3.0; };
    p.grad_f = [gamma](const Vector& u) -> Vector { return gamma * u.array().square().matrix(); };
    p.delta_F = [gamma](const Vector& u, const Vector& w) {
        // (u + w)³ − u³ = w(3u² + 3uw + w²)
        const auto x = u.array();
        const auto v = w.array();
        return gamma * (v * (3.0 * x.square() + 3.0 * x * v + v.square())).sum() / 3.0;
    };
    p.lipschitz_on_box = [gamma](double r) { return 2.0 * gamma * r; };
    p.box_radius = box_radius;
    p.lipschitz_L = 2.0 * gamma * box_radius;
    return p;
}

} // namespace dcsplit

#endif
