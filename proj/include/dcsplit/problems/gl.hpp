#ifndef DCSPLIT_PROBLEMS_GL_HPP
#define DCSPLIT_PROBLEMS_GL_HPP

// Graph Ginzburg-Landau segmentation
//   E(u) = Σᵢⱼ (ε/2)wᵢⱼ(uᵢ − uⱼ)² + (1/ε)𝕎(u) + (η/2)Σᵢ Λᵢ(uᵢ − yᵢ)²,
// 𝕎(u) = ¼Σ(uᵢ² − 1)², split as H = Dirichlet + fidelity, F = (1/ε)𝕎.

#include "dcsplit/linops.hpp"
#include "dcsplit/problems/image.hpp"
#include "dcsplit/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace dcsplit {

/// Row i holds the (2p+1)² intensity patch around pixel i, edges clamped.
inline DenseMatrix patch_features(const Image& img, int patch_radius = 1)
{
    const int side = 2 * patch_radius + 1;
    DenseMatrix f(static_cast<Index>(img.size()), side * side);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
        {
            const Index row = static_cast<Index>(y) * img.width + x;
            int c = 0;
            for (int dy = -patch_radius; dy <= patch_radius; ++dy)
                for (int dx = -patch_radius; dx <= patch_radius; ++dx)
                {
                    const int xx = std::clamp(x + dx, 0, img.width - 1);
                    const int yy = std::clamp(y + dy, 0, img.height - 1);
                    f(row, c++) = img.at(xx, yy);
                }
        }
    return f;
}

/// Median of ‖Pᵢ − Pⱼ‖² over horizontally and vertically adjacent pixels.
inline double median_sigma2(const DenseMatrix& features, int width, int height)
{
    std::vector<double> d;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            const Index i = static_cast<Index>(y) * width + x;
            if (x + 1 < width)
                d.push_back((features.row(i) - features.row(i + 1)).squaredNorm());
            if (y + 1 < height)
                d.push_back((features.row(i) - features.row(i + width)).squaredNorm());
        }
    if (d.empty())
        return 1.0;
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    const double med = d[d.size() / 2];
    return med > 0.0 ? med : 1.0;
}

/// wᵢⱼ = exp(−‖Pᵢ − Pⱼ‖²/σ²) for pixels within Chebyshev distance `radius`
/// (i ≠ j), 0 otherwise.
inline Eigen::SparseMatrix<double> build_weights(const DenseMatrix& features, int width, int height, double sigma2,
                                                 int radius)
{
    if (!(sigma2 > 0.0))
        throw StructuralError("build_weights requires sigma2 > 0");
    if (features.rows() != static_cast<Index>(width) * height)
        throw StructuralError("build_weights: feature rows do not match the grid");
    std::vector<Triplet> trips;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            const Index i = static_cast<Index>(y) * width + x;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                {
                    if (dx == 0 && dy == 0)
                        continue;
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= width || yy >= height)
                        continue;
                    const Index j = static_cast<Index>(yy) * width + xx;
                    const double w = std::exp(-(features.row(i) - features.row(j)).squaredNorm() / sigma2);
                    trips.emplace_back(i, j, w);
                }
        }
    Eigen::SparseMatrix<double> w(features.rows(), features.rows());
    w.setFromTriplets(trips.begin(), trips.end());
    return w;
}

struct GlInstance
{
    int width = 0;
    int height = 0;
    DenseMatrix features;
    Eigen::SparseMatrix<double> weights;
    /// Λ as a 0/1 vector.
    Vector lambda;
    /// ±1 on labeled nodes, 0 elsewhere.
    Vector y;
    double epsilon = 10.0;
    double eta = 10.0;
    double sigma2 = 1.0;
    int proximity_radius = 3;
    Mask truth;
};

struct GlOptions
{
    double epsilon = 10.0;
    double eta = 10.0;
    int proximity_radius = 3;
    int patch_radius = 1;
    /// ≤ 0 selects the median heuristic.
    double sigma2 = 0.0;
};

inline GlInstance make_gl_instance(const Image& img, const Labels& labels, const GlOptions& opt = {},
                                   Mask truth = {})
{
    if (labels.size() != img.size())
        throw StructuralError("label image does not match the input image");
    GlInstance inst;
    inst.width = img.width;
    inst.height = img.height;
    inst.epsilon = opt.epsilon;
    inst.eta = opt.eta;
    inst.proximity_radius = opt.proximity_radius;
    inst.features = patch_features(img, opt.patch_radius);
    inst.sigma2 = opt.sigma2 > 0.0 ? opt.sigma2 : median_sigma2(inst.features, img.width, img.height);
    inst.weights = build_weights(inst.features, img.width, img.height, inst.sigma2, opt.proximity_radius);
    const Index n = static_cast<Index>(img.size());
    inst.lambda = Vector::Zero(n);
    inst.y = Vector::Zero(n);
    for (Index i = 0; i < n; ++i)
        if (labels[static_cast<std::size_t>(i)] != 0)
        {
            inst.lambda[i] = 1.0;
            inst.y[i] = labels[static_cast<std::size_t>(i)] > 0 ? 1.0 : -1.0;
        }
    inst.truth = std::move(truth);
    return inst;
}

/// u⁰ = y on labeled nodes, 0 elsewhere.
inline Vector gl_initial_point(const GlInstance& inst) { return inst.y; }

inline double double_well(const Vector& u) { return 0.25 * (u.array().square() - 1.0).square().sum(); }

/// L of f(u) = (u³ − u)/ε on ‖u‖∞ ≤ r.
inline double gl_lipschitz(double epsilon, double radius) { return (3.0 * radius * radius - 1.0) / epsilon; }

/// A = 2εL_w + ηΛ, b₀ = ηΛy, f = (u³ − u)/ε, L on the box ‖u‖∞ ≤ box_radius.
/// Baseline split: P₁ = H, f_cvx = F + ‖u‖²/(2ε), P₂ = ‖u‖²/(2ε).
inline Problem gl_problem(const GlInstance& inst, double box_radius = 1.1)
{
    const LinearOperator lap = graph_laplacian(inst.weights);
    const Index n = lap.size();
    SparseLower lower = (2.0 * inst.epsilon) * lap.lower_triangle();
    for (Index i = 0; i < n; ++i)
        lower.coeffRef(i, i) += inst.eta * inst.lambda[i];
    lower.makeCompressed();

    struct Data
    {
        LinearOperator a;
        LinearOperator lap;
        Vector b0;
        Vector lambda;
        Vector y;
        double eps;
        double eta;
    };
    auto d = std::make_shared<const Data>(Data{LinearOperator::sparse_symmetric(std::move(lower), true), lap,
                                               Vector(inst.eta * inst.lambda.cwiseProduct(inst.y)), inst.lambda,
                                               inst.y, inst.epsilon, inst.eta});

    Problem p;
    p.name = "gl";
    p.dimension = n;
    p.eval_H = [d](const Vector& u) {
        const Vector r = u - d->y;
        return d->eps * u.dot(d->lap.apply(u)) + 0.5 * d->eta * d->lambda.cwiseProduct(r).dot(r);
    };
    p.grad_h = [d](const Vector& u) -> Vector { return d->a.apply(u) - d->b0; };
    p.eval_F = [d](const Vector& u) { return double_well(u) / d->eps; };
    p.grad_f = [d](const Vector& u) -> Vector { return (u.array().cube() - u.array()).matrix() / d->eps; };
    p.delta_H = [d](const Vector& u, const Vector& w) {
        return (d->a.apply(u) - d->b0).dot(w) + 0.5 * w.dot(d->a.apply(w));
    };
    p.delta_F = [d](const Vector& u, const Vector& w) {
        // ¼[(a − b)(a + b)] with a = (u + w)² − 1, b = u² − 1.
        const auto x = u.array();
        const auto v = w.array();
        const Eigen::ArrayXd diff = v * (2.0 * x + v);
        const Eigen::ArrayXd sum = (x + v).square() + x.square() - 2.0;
        return 0.25 * (diff * sum).sum() / d->eps;
    };
    const double eps = inst.epsilon;
    p.lipschitz_on_box = [eps](double r) { return gl_lipschitz(eps, r); };
    p.box_radius = box_radius;
    p.lipschitz_L = gl_lipschitz(eps, box_radius);
    p.linear = LinearPart{d->a, d->b0};
    p.hess_h_apply = [d](const Vector&, const Vector& v) -> Vector { return d->a.apply(v); };

    BaselineSplit s;
    s.p1_value = p.eval_H;
    s.p1_prox = [d](double rho, const Vector& z, const Vector& guess) {
        const CgResult res = cg_solve([&](const Vector& v) -> Vector { return d->a.apply(v) + rho * v; },
                                      Vector(d->b0 + rho * z), guess, 1e-10, 10000);
        if (!res.converged)
            throw StructuralError("baseline prox: CG did not converge");
        return res.x;
    };
    s.fcvx_value = [d](const Vector& u) { return (double_well(u) + 0.5 * u.squaredNorm()) / d->eps; };
    s.fcvx_grad = [d](const Vector& u) -> Vector { return u.array().cube().matrix() / d->eps; };
    s.p2_value = [d](const Vector& u) { return 0.5 * u.squaredNorm() / d->eps; };
    s.p2_grad = [d](const Vector& u) -> Vector { return u / d->eps; };
    s.rho_dca = p.lipschitz_L;
    s.rho_pdcae = p.lipschitz_L + 1.0 / eps;
    p.baseline = std::move(s);
    return p;
}

} // namespace dcsplit

#endif
