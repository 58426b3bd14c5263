#ifndef DCSPLIT_NEWTON_HPP
#define DCSPLIT_NEWTON_HPP

// Semismooth Newton-CG for strongly convex, piecewise twice differentiable
// objectives. Used for subproblems that carry a separable convex term.

#include "dcsplit/linops.hpp"

#include <algorithm>
#include <cmath>

namespace dcsplit {

struct NewtonOptions
{
    /// Stop at ‖∇φ‖ ≤ tol·max(1, scale).
    double tol = 1e-11;
    double scale = 1.0;
    int max_iters = 200;
    int cg_maxit = 5000;
};

struct NewtonResult
{
    Vector x;
    int iterations = 0;
    int cg_iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
};

/// Minimizes φ given its value, gradient and generalized Hessian action
/// hess(x, v). Inexact Newton directions from CG, Armijo backtracking on φ.
template <typename Value, typename Grad, typename Hess>
NewtonResult newton_cg_minimize(Value&& value, Grad&& grad, Hess&& hess, const Vector& x0,
                                const NewtonOptions& opt = {})
{
    NewtonResult res;
    res.x = x0;
    const double target = opt.tol * std::max(1.0, opt.scale);
    double phi = value(res.x);
    Vector g = grad(res.x);
    res.grad_norm = g.norm();
    for (int it = 0; it < opt.max_iters; ++it)
    {
        if (res.grad_norm <= target)
        {
            res.converged = true;
            return res;
        }
        const double forcing = std::min(0.1, std::sqrt(res.grad_norm));
        const Vector& xk = res.x;
        const CgResult cg = cg_solve([&](const Vector& v) { return hess(xk, v); }, Vector(-g),
                                     Vector::Zero(g.size()), forcing * res.grad_norm / std::max(1.0, res.grad_norm),
                                     opt.cg_maxit);
        res.cg_iterations += cg.iterations;
        const Vector p = cg.x;
        const double slope = g.dot(p);
        double t = 1.0;
        Vector trial;
        double phi_trial = 0.0;
        Vector g_trial;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt, t *= 0.5)
        {
            trial = res.x + t * p;
            phi_trial = value(trial);
            g_trial = grad(trial);
            // Near the optimum φ stalls at rounding level; a gradient decrease
            // is then accepted instead.
            if (phi_trial <= phi + 1e-4 * t * slope ||
                (phi_trial <= phi + 1e-15 * std::abs(phi) && g_trial.norm() < res.grad_norm))
            {
                accepted = true;
                break;
            }
        }
        res.iterations = it + 1;
        if (!accepted)
            return res;
        res.x = std::move(trial);
        phi = phi_trial;
        g = std::move(g_trial);
        res.grad_norm = g.norm();
    }
    res.converged = res.grad_norm <= target;
    return res;
}

} // namespace dcsplit

#endif
