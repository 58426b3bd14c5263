#ifndef DCSPLIT_PROBLEMS_SCAD_HPP
#define DCSPLIT_PROBLEMS_SCAD_HPP

// Sparse least squares with a Huber-smoothed SCAD penalty
//   E(u) = ½‖Au − b‖² + μH_α(u) − P̃(u),
// and the ℓ₁ variant with μ‖u‖₁ in place of μH_α.

#include "dcsplit/linops.hpp"
#include "dcsplit/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

namespace dcsplit {

struct ScadInstance
{
    DenseMatrix A;
    Vector b;
    Vector y_true;
    double mu = 5e-4;
    double theta = 10.0;
    double huber_alpha = 2.5e-4;
    std::uint64_t seed = 0;
};

/// Gaussian A with unit columns, s-sparse Gaussian y_true on a uniform
/// support, b = A·y_true + 0.01·k̂. Draw order: A, support, values, noise.
inline ScadInstance gen_scad(Index m, Index k, Index s, std::uint64_t seed, double mu = 5e-4, double theta = 10.0,
                             double huber_alpha = -1.0)
{
    if (s > k || s < 0)
        throw StructuralError("gen_scad requires 0 <= s <= k");
    if (m <= 0 || k <= 0)
        throw StructuralError("gen_scad requires positive m and k");
    ScadInstance inst;
    inst.mu = mu;
    inst.theta = theta;
    inst.huber_alpha = huber_alpha > 0.0 ? huber_alpha : 0.5 * mu;
    inst.seed = seed;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    inst.A.resize(m, k);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < m; ++i)
            inst.A(i, j) = normal(gen);
    for (Index j = 0; j < k; ++j)
        inst.A.col(j).normalize();

    std::vector<Index> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), Index{0});
    // Partial Fisher-Yates keeps the draw sequence independent of the library.
    for (Index i = 0; i < s; ++i)
    {
        std::uniform_int_distribution<Index> pick(i, k - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(gen))]);
    }
    inst.y_true = Vector::Zero(k);
    for (Index i = 0; i < s; ++i)
        inst.y_true[idx[static_cast<std::size_t>(i)]] = normal(gen);

    Vector noise(m);
    for (Index i = 0; i < m; ++i)
        noise[i] = normal(gen);
    inst.b = inst.A * inst.y_true + 0.01 * noise;
    return inst;
}

/// H_α(u) = Σ uᵢ²/(2α) for |uᵢ| ≤ α, |uᵢ| − α/2 otherwise.
inline double huber(const Vector& u, double alpha)
{
    double sum = 0.0;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double a = std::abs(u[i]);
        sum += a <= alpha ? u[i] * u[i] / (2.0 * alpha) : a - 0.5 * alpha;
    }
    return sum;
}

inline Vector huber_grad(const Vector& u, double alpha)
{
    Vector g(u.size());
    for (Index i = 0; i < u.size(); ++i)
        g[i] = std::abs(u[i]) <= alpha ? u[i] / alpha : (u[i] > 0.0 ? 1.0 : -1.0);
    return g;
}

/// P̃ᵢ = 0 for |u| ≤ μ, (|u| − μ)²/(2(θ−1)) up to θμ, μ|u| − (θ+1)μ²/2 beyond.
inline double scad_tilde_P(const Vector& u, double mu, double theta)
{
    double sum = 0.0;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double a = std::abs(u[i]);
        if (a <= mu)
            continue;
        if (a <= theta * mu)
            sum += (a - mu) * (a - mu) / (2.0 * (theta - 1.0));
        else
            sum += mu * a - 0.5 * (theta + 1.0) * mu * mu;
    }
    return sum;
}

/// ∇ᵢP̃ = sign(uᵢ)[min(θμ, |uᵢ|) − μ]₊/(θ−1).
inline Vector scad_tilde_P_grad(const Vector& u, double mu, double theta)
{
    Vector g(u.size());
    for (Index i = 0; i < u.size(); ++i)
    {
        const double a = std::abs(u[i]);
        const double mag = std::max(std::min(theta * mu, a) - mu, 0.0) / (theta - 1.0);
        g[i] = u[i] > 0.0 ? mag : (u[i] < 0.0 ? -mag : 0.0);
    }
    return g;
}

/// Four-branch form of μH_α(u) − P̃(u).
inline double huber_scad_penalty(const Vector& u, double mu, double theta, double alpha)
{
    if (!(alpha < mu) || !(theta > 1.0) || !(alpha > 0.0))
        throw StructuralError("huber_scad_penalty requires 0 < alpha < mu and theta > 1");
    double sum = 0.0;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double a = std::abs(u[i]);
        if (a <= alpha)
            sum += mu * a * a / (2.0 * alpha);
        else if (a <= mu)
            sum += mu * (a - 0.5 * alpha);
        else if (a <= theta * mu)
            sum += mu * (a - 0.5 * alpha) - (a - mu) * (a - mu) / (2.0 * (theta - 1.0));
        else
            sum += 0.5 * mu * (mu * (theta + 1.0) - alpha);
    }
    return sum;
}

namespace detail {

inline double huber_scalar(double x, double alpha)
{
    const double a = std::abs(x);
    return a <= alpha ? x * x / (2.0 * alpha) : a - 0.5 * alpha;
}

inline double scad_tilde_scalar(double x, double mu, double theta)
{
    const double a = std::abs(x);
    if (a <= mu)
        return 0.0;
    if (a <= theta * mu)
        return (a - mu) * (a - mu) / (2.0 * (theta - 1.0));
    return mu * a - 0.5 * (theta + 1.0) * mu * mu;
}

} // namespace detail

/// H_α(u + w) − H_α(u), summed per coordinate.
inline double huber_delta(const Vector& u, const Vector& w, double alpha)
{
    double sum = 0.0;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double x = u[i], v = x + w[i];
        if (std::abs(x) <= alpha && std::abs(v) <= alpha)
            sum += w[i] * (2.0 * x + w[i]) / (2.0 * alpha);
        else if (std::abs(x) > alpha && std::abs(v) > alpha && (x > 0.0) == (v > 0.0))
            sum += x > 0.0 ? w[i] : -w[i];
        else
            sum += detail::huber_scalar(v, alpha) - detail::huber_scalar(x, alpha);
    }
    return sum;
}

/// P̃(u + w) − P̃(u), summed per coordinate.
inline double scad_tilde_P_delta(const Vector& u, const Vector& w, double mu, double theta)
{
    double sum = 0.0;
    for (Index i = 0; i < u.size(); ++i)
    {
        const double x = u[i], v = x + w[i];
        const double ax = std::abs(x), av = std::abs(v);
        const bool same_sign = (x > 0.0) == (v > 0.0);
        if (ax <= mu && av <= mu)
            continue;
        if (same_sign && ax > theta * mu && av > theta * mu)
            sum += mu * (x > 0.0 ? w[i] : -w[i]);
        else if (same_sign && ax > mu && ax <= theta * mu && av > mu && av <= theta * mu)
            sum += (av - ax) * (av + ax - 2.0 * mu) / (2.0 * (theta - 1.0));
        else
            sum += detail::scad_tilde_scalar(v, mu, theta) - detail::scad_tilde_scalar(x, mu, theta);
    }
    return sum;
}

/// Solves c·y + μH'_α(y) = r coordinatewise.
inline Vector huber_resolvent(const Vector& c, const Vector& r, double mu, double alpha)
{
    Vector y(r.size());
    for (Index i = 0; i < r.size(); ++i)
    {
        const double ri = r[i];
        if (std::abs(ri) <= c[i] * alpha + mu)
            y[i] = ri / (c[i] + mu / alpha);
        else
            y[i] = (ri - (ri > 0.0 ? mu : -mu)) / c[i];
    }
    return y;
}

/// Solves c·y + μ∂|y| ∋ r coordinatewise (soft thresholding).
inline Vector l1_resolvent(const Vector& c, const Vector& r, double mu)
{
    Vector y(r.size());
    for (Index i = 0; i < r.size(); ++i)
    {
        const double ri = r[i];
        y[i] = std::abs(ri) <= mu ? 0.0 : (ri - (ri > 0.0 ? mu : -mu)) / c[i];
    }
    return y;
}

/// Count of |uᵢ| ≤ tol.
inline Index sparsity(const Vector& u, double tol = 1e-6)
{
    if (!(tol > 0.0))
        throw StructuralError("sparsity requires tol > 0");
    return static_cast<Index>((u.array().abs() <= tol).count());
}

namespace detail {

struct ScadData
{
    DenseMatrix A;
    Vector b;
    Vector atb;
    double mu;
    double theta;
    double alpha;
};

inline double largest_gram_eigenvalue(const DenseMatrix& a)
{
    return power_iteration(
               [&](const Vector& v) -> Vector {
                   const Vector av = a * v;
                   return a.transpose() * av;
               },
               a.cols(), 1e-8, 1000)
        .value;
}

inline void fill_scad_common(Problem& p, const std::shared_ptr<const ScadData>& d)
{
    p.dimension = d->A.cols();
    p.eval_F = [d](const Vector& u) { return -scad_tilde_P(u, d->mu, d->theta); };
    p.grad_f = [d](const Vector& u) -> Vector { return -scad_tilde_P_grad(u, d->mu, d->theta); };
    p.lipschitz_L = 1.0 / (d->theta - 1.0);
    p.linear = LinearPart{LinearOperator::gram(d->A), d->atb};
    p.delta_F = [d](const Vector& u, const Vector& w) { return -scad_tilde_P_delta(u, w, d->mu, d->theta); };
}

/// ½‖A(u + w) − b‖² − ½‖Au − b‖².
inline double least_squares_delta(const ScadData& d, const Vector& u, const Vector& w)
{
    const Vector aw = d.A * w;
    return (d.A * u - d.b).dot(aw) + 0.5 * aw.squaredNorm();
}

} // namespace detail

/// BapDCA split H = ½‖Au − b‖² + μH_α, F = −P̃, with the DC baseline split
/// f_cvx = ½‖Au − b‖², P₁ = μH_α, P₂ = P̃ and ρ = λ_max(AᵀA).
inline Problem scad_problem(const ScadInstance& inst)
{
    if (!(inst.huber_alpha < inst.mu))
        throw StructuralError("scad_problem requires huber_alpha < mu");
    auto d = std::make_shared<const detail::ScadData>(detail::ScadData{
        inst.A, inst.b, inst.A.transpose() * inst.b, inst.mu, inst.theta, inst.huber_alpha});
    Problem p;
    p.name = "scad";
    detail::fill_scad_common(p, d);
    p.eval_H = [d](const Vector& u) {
        return 0.5 * (d->A * u - d->b).squaredNorm() + d->mu * huber(u, d->alpha);
    };
    p.grad_h = [d](const Vector& u) -> Vector {
        const Vector r = d->A * u - d->b;
        return d->A.transpose() * r + d->mu * huber_grad(u, d->alpha);
    };
    p.delta_H = [d](const Vector& u, const Vector& w) {
        return detail::least_squares_delta(*d, u, w) + d->mu * huber_delta(u, w, d->alpha);
    };
    auto curvature = [d](const Vector& u) -> Vector {
        return (u.array().abs() <= d->alpha).select(Vector::Constant(u.size(), d->mu / d->alpha), 0.0);
    };
    p.hess_h_apply = [d, curvature](const Vector& u, const Vector& v) -> Vector {
        const Vector av = d->A * v;
        return d->A.transpose() * av + curvature(u).cwiseProduct(v);
    };
    SeparablePart g;
    g.value = [d](const Vector& u) { return d->mu * huber(u, d->alpha); };
    g.gradient = [d](const Vector& u) -> Vector { return d->mu * huber_grad(u, d->alpha); };
    g.resolve = [d](const Vector& c, const Vector& r) { return huber_resolvent(c, r, d->mu, d->alpha); };
    g.curvature = curvature;
    p.separable = std::move(g);

    const double rho = detail::largest_gram_eigenvalue(d->A);
    BaselineSplit s;
    s.p1_value = [d](const Vector& u) { return d->mu * huber(u, d->alpha); };
    s.p1_prox = [d](double r, const Vector& z, const Vector&) {
        return huber_resolvent(Vector::Constant(z.size(), r), r * z, d->mu, d->alpha);
    };
    s.fcvx_value = [d](const Vector& u) { return 0.5 * (d->A * u - d->b).squaredNorm(); };
    s.fcvx_grad = [d](const Vector& u) -> Vector { return d->A.transpose() * (d->A * u - d->b); };
    s.p2_value = [d](const Vector& u) { return scad_tilde_P(u, d->mu, d->theta); };
    s.p2_grad = [d](const Vector& u) -> Vector { return scad_tilde_P_grad(u, d->mu, d->theta); };
    s.rho_dca = rho;
    s.rho_pdcae = rho;
    p.baseline = std::move(s);
    return p;
}

/// ℓ₁-SCAD: E = ½‖Au − b‖² + μ‖u‖₁ − P̃; H is nonsmooth, so only the baseline
/// split (soft-thresholding prox) and the diagonal resolvent path apply.
inline Problem scad_l1_problem(const ScadInstance& inst)
{
    auto d = std::make_shared<const detail::ScadData>(detail::ScadData{
        inst.A, inst.b, inst.A.transpose() * inst.b, inst.mu, inst.theta, inst.huber_alpha});
    Problem p;
    p.name = "scad-l1";
    detail::fill_scad_common(p, d);
    p.eval_H = [d](const Vector& u) { return 0.5 * (d->A * u - d->b).squaredNorm() + d->mu * u.lpNorm<1>(); };
    p.delta_H = [d](const Vector& u, const Vector& w) {
        double l1 = 0.0;
        for (Index i = 0; i < u.size(); ++i)
        {
            const double v = u[i] + w[i];
            l1 += (u[i] > 0.0 && v > 0.0) ? w[i] : ((u[i] < 0.0 && v < 0.0) ? -w[i] : std::abs(v) - std::abs(u[i]));
        }
        return detail::least_squares_delta(*d, u, w) + d->mu * l1;
    };
    SeparablePart g;
    g.value = [d](const Vector& u) { return d->mu * u.lpNorm<1>(); };
    g.resolve = [d](const Vector& c, const Vector& r) { return l1_resolvent(c, r, d->mu); };
    p.separable = std::move(g);
    p.stationarity_norm = [d](const Vector& u) {
        const Vector g0 = d->A.transpose() * (d->A * u - d->b) - scad_tilde_P_grad(u, d->mu, d->theta);
        double sum = 0.0;
        for (Index i = 0; i < u.size(); ++i)
        {
            const double gi = u[i] != 0.0 ? g0[i] + (u[i] > 0.0 ? d->mu : -d->mu)
                                          : std::max(std::abs(g0[i]) - d->mu, 0.0);
            sum += gi * gi;
        }
        return std::sqrt(sum);
    };

    const double rho = detail::largest_gram_eigenvalue(d->A);
    BaselineSplit s;
    s.p1_value = [d](const Vector& u) { return d->mu * u.lpNorm<1>(); };
    s.p1_prox = [d](double r, const Vector& z, const Vector&) {
        return l1_resolvent(Vector::Constant(z.size(), r), r * z, d->mu);
    };
    s.fcvx_value = [d](const Vector& u) { return 0.5 * (d->A * u - d->b).squaredNorm(); };
    s.fcvx_grad = [d](const Vector& u) -> Vector { return d->A.transpose() * (d->A * u - d->b); };
    s.p2_value = [d](const Vector& u) { return scad_tilde_P(u, d->mu, d->theta); };
    s.p2_grad = [d](const Vector& u) -> Vector { return scad_tilde_P_grad(u, d->mu, d->theta); };
    s.rho_dca = rho;
    s.rho_pdcae = rho;
    p.baseline = std::move(s);
    return p;
}

} // namespace dcsplit

#endif
