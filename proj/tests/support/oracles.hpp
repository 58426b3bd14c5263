#ifndef DCSPLIT_TEST_ORACLES_HPP
#define DCSPLIT_TEST_ORACLES_HPP

// Reference computations that share no code paths with the library kernels.

#include "dcsplit/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace oracle {

using dcsplit::DenseMatrix;
using dcsplit::Index;
using dcsplit::Vector;

inline Vector dense_solve(const DenseMatrix& t, const Vector& b) { return t.ldlt().solve(b); }

/// (D − E)D⁻¹(D − Eᵀ) with T = D − E − Eᵀ, formed densely.
inline DenseMatrix sgs_big_M(const DenseMatrix& t)
{
    const Index n = t.rows();
    DenseMatrix d = DenseMatrix::Zero(n, n);
    DenseMatrix e = DenseMatrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
    {
        d(i, i) = t(i, i);
        for (Index j = 0; j < i; ++j)
            e(i, j) = -t(i, j);
    }
    return (d - e) * d.inverse() * (d - e.transpose());
}

inline DenseMatrix random_spd(Index n, std::uint64_t seed, double shift = 1.0)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix q(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i)
            q(i, j) = normal(gen);
    DenseMatrix a = q.transpose() * q / static_cast<double>(n);
    a.diagonal().array() += shift;
    return a;
}

/// Diagonally dominant SPD matrix with unit diagonal and off-diagonal row sums
/// at most `dominance` < 1.
inline DenseMatrix random_dominant(Index n, std::uint64_t seed, double dominance = 0.5)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    DenseMatrix a = DenseMatrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < i; ++j)
            a(i, j) = a(j, i) = unif(gen);
    double worst = 0.0;
    for (Index i = 0; i < n; ++i)
        worst = std::max(worst, a.row(i).cwiseAbs().sum());
    a *= dominance / worst;
    a.diagonal().setOnes();
    return a;
}

/// Classical RK4 on the gradient flow u' = −(3/4)∇E over time h.
inline Vector rk4_flow(const dcsplit::Problem& p, Vector u, double h, int substeps)
{
    const double k = h / substeps;
    auto rhs = [&](const Vector& v) -> Vector { return -0.75 * dcsplit::grad_E(p, v); };
    for (int i = 0; i < substeps; ++i)
    {
        const Vector a = rhs(u);
        const Vector b = rhs(u + 0.5 * k * a);
        const Vector c = rhs(u + 0.5 * k * b);
        const Vector d = rhs(u + k * c);
        u += k / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    }
    return u;
}

/// Scheme solution at time t_final with an RK4 starter for u¹.
inline Vector scheme_at(const dcsplit::Problem& p, const dcsplit::PreconditionerSpec& pc, double dt, double t_final,
                        const Vector& u0, dcsplit::Anchor anchor = dcsplit::Anchor::n_mode)
{
    dcsplit::SolverConfig cfg;
    cfg.dt = dt;
    cfg.preconditioner = pc;
    cfg.anchor = anchor;
    const Vector u1 = rk4_flow(p, u0, dt, 64);
    const int steps = static_cast<int>(std::lround(t_final / dt)) - 1;
    return dcsplit::run_fixed_steps(p, cfg, u1, u0, steps);
}

/// Σᵢⱼ (ε/2) wᵢⱼ (uᵢ − uⱼ)².
inline double dirichlet_double_sum(const DenseMatrix& w, const Vector& u, double eps)
{
    double s = 0.0;
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            s += 0.5 * eps * w(i, j) * (u[i] - u[j]) * (u[i] - u[j]);
    return s;
}

/// One step on E = ½u² with δt = 1 and M = 0: 3y = (2/3)(4uⁿ − uⁿ⁻¹).
inline double scalar_quadratic_step(double u_n, double u_nm1) { return (8.0 * u_n - 2.0 * u_nm1) / 9.0; }

} // namespace oracle

#endif
