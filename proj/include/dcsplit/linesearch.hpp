#ifndef DCSPLIT_LINESEARCH_HPP
#define DCSPLIT_LINESEARCH_HPP

// Armijo backtracking on eₙ(λ) = Eⁿ(yⁿ + λdⁿ) starting from yⁿ.

#include "dcsplit/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace dcsplit {

enum class LineSearchMode
{
    standard,
    /// Returns λ = 0 instead of failing once backtracks are exhausted.
    til_fallback
};

struct LineSearchConfig
{
    double alpha = 0.2;
    double beta = 0.8;
    double lambda_bar_max = 5.0;
    bool use_quadratic_init = true;
    /// Probe step for the interpolation.
    double lambda_bar = 0.618 * 5.0;
    int max_backtracks = 50;
    LineSearchMode mode = LineSearchMode::standard;

    void validate() const
    {
        if (!(alpha > 0.0))
            throw StructuralError("line search: alpha must be positive");
        if (!(beta > 0.0 && beta < 1.0))
            throw StructuralError("line search: beta must lie in (0, 1)");
        if (!(lambda_bar_max > 0.0))
            throw StructuralError("line search: lambda_bar_max must be positive");
        if (use_quadratic_init && !(lambda_bar > 0.0 && lambda_bar <= lambda_bar_max))
            throw StructuralError("line search: lambda_bar must lie in (0, lambda_bar_max]");
        if (max_backtracks < 0)
            throw StructuralError("line search: max_backtracks must be >= 0");
    }
};

class LineSearchExhausted : public std::runtime_error
{
  public:
    explicit LineSearchExhausted(const std::string& what) : std::runtime_error(what) {}
};

/// Vertex −b/(2a) of aλ² + bλ + c through e(0) = e0, e'(0) = de0 and
/// e(λ̄) = e_bar. Empty when the fit is not convex or the vertex is ≤ 0.
inline std::optional<double> quad_init(double e0, double de0, double e_bar, double lambda_bar)
{
    if (!(lambda_bar > 0.0))
        throw StructuralError("quad_init requires lambda_bar > 0");
    const double a = (e_bar - e0 - de0 * lambda_bar) / (lambda_bar * lambda_bar);
    if (!(a > 0.0))
        return std::nullopt;
    const double vertex = -de0 / (2.0 * a);
    if (!(vertex > 0.0) || !std::isfinite(vertex))
        return std::nullopt;
    return vertex;
}

struct LineSearchResult
{
    double lambda = 0.0;
    int evals = 0;
    double lambda_start = 0.0;
    std::optional<double> interpolated;
    /// eₙ(λ) at the returned λ.
    double e_accepted = 0.0;
    bool fallback = false;
};

/// Backtracks λ = βᵏλ_start until e(λ) ≤ e0 − αλ‖d‖². `de0` is only used by
/// the interpolated start.
inline LineSearchResult armijo_search(const std::function<double(double)>& e, double e0, double de0,
                                      double d_norm_sq, const LineSearchConfig& cfg)
{
    cfg.validate();
    LineSearchResult res;
    double start = cfg.lambda_bar_max;
    if (cfg.use_quadratic_init)
    {
        const double e_bar = e(cfg.lambda_bar);
        ++res.evals;
        res.interpolated = quad_init(e0, de0, e_bar, cfg.lambda_bar);
        if (res.interpolated)
            start = std::min(cfg.lambda_bar_max, *res.interpolated);
    }
    res.lambda_start = start;
    double lambda = start;
    for (int k = 0; k <= cfg.max_backtracks; ++k, lambda *= cfg.beta)
    {
        const double value = e(lambda);
        ++res.evals;
        if (value <= e0 - cfg.alpha * lambda * d_norm_sq)
        {
            res.lambda = lambda;
            res.e_accepted = value;
            return res;
        }
    }
    if (cfg.mode == LineSearchMode::til_fallback)
    {
        res.lambda = 0.0;
        res.e_accepted = e0;
        res.fallback = true;
        return res;
    }
    throw LineSearchExhausted("Armijo line search failed after " + std::to_string(cfg.max_backtracks) +
                              " backtracks");
}

/// Line search on Eⁿ along d from y. Works on eₙ(λ) − eₙ(0), so the reported
/// e_accepted is a difference.
inline LineSearchResult armijo(const SurrogateState& s, const Problem& p, const Vector& y, const Vector& d,
                               const LineSearchConfig& cfg)
{
    const SurrogateEnergy en(p, s);
    const double de0 = cfg.use_quadratic_init ? en.grad_En(y).dot(d) : 0.0;
    return armijo_search([&](double lambda) { return en.En_delta(y, Vector(lambda * d)); }, 0.0, de0,
                         d.squaredNorm(), cfg);
}

} // namespace dcsplit

#endif
