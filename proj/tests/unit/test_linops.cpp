#include "dcsplit/linops.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dcsplit;

namespace {

Vector vec(std::initializer_list<double> v)
{
    Vector x(static_cast<Index>(v.size()));
    Index i = 0;
    for (double e : v)
        x[i++] = e;
    return x;
}

DenseMatrix mat2(double a, double b, double c, double d)
{
    DenseMatrix m(2, 2);
    m << a, b, c, d;
    return m;
}

} // namespace

TEST(Apply, DiagonalScaling)
{
    EXPECT_EQ(LinearOperator::diagonal(vec({2, 3})).apply(vec({1, 1})), vec({2, 3}));
}

TEST(Apply, Identity)
{
    const Vector x = seeded_probe(7, 1);
    EXPECT_EQ(LinearOperator::identity(7).apply(x), x);
}

TEST(Apply, DenseTwoByTwo)
{
    EXPECT_EQ(LinearOperator::dense(mat2(2, -1, -1, 2)).apply(vec({1, 1})), vec({1, 1}));
}

TEST(Apply, DimensionMismatchThrows)
{
    EXPECT_THROW(LinearOperator::identity(3).apply(vec({1, 2})), StructuralError);
}

TEST(Apply, StorageClassesAgree)
{
    const DenseMatrix a = oracle::random_spd(12, 4);
    const LinearOperator dense = LinearOperator::dense(a);
    std::vector<Eigen::Triplet<double>> trips;
    for (Index i = 0; i < 12; ++i)
        for (Index j = 0; j <= i; ++j)
            trips.emplace_back(i, j, a(i, j));
    SparseLower lower(12, 12);
    lower.setFromTriplets(trips.begin(), trips.end());
    const LinearOperator sparse = LinearOperator::sparse_symmetric(lower);
    const Vector x = seeded_probe(12, 9);
    EXPECT_LT((dense.apply(x) - a * x).norm(), 1e-12);
    EXPECT_LT((sparse.apply(x) - a * x).norm(), 1e-12);
    DenseMatrix g(5, 12);
    g.setRandom();
    EXPECT_LT((LinearOperator::gram(g).apply(x) - g.transpose() * (g * x)).norm(), 1e-12);
}

TEST(Apply, SymmetryAndPsdProbes)
{
    const LinearOperator a = LinearOperator::dense(oracle::random_spd(10, 2));
    for (std::uint64_t s = 0; s < 20; ++s)
    {
        const Vector x = seeded_probe(10, 2 * s), y = seeded_probe(10, 2 * s + 1);
        EXPECT_NEAR(x.dot(a.apply(y)), y.dot(a.apply(x)), 1e-12 * (1 + x.norm() * y.norm()));
        EXPECT_GE(x.dot(a.apply(x)), -1e-10);
    }
}

TEST(MNormSq, Examples)
{
    EXPECT_EQ(m_norm_sq(LinearOperator::zero(2), vec({5, -7})), 0.0);
    EXPECT_EQ(m_norm_sq(LinearOperator::identity(2), vec({3, 4})), 25.0);
    EXPECT_DOUBLE_EQ(m_norm_sq(LinearOperator::diagonal(vec({0, 0.5})), vec({1, 2})), 2.0);
}

TEST(CgSolve, IdentityOneIteration)
{
    const Vector b = seeded_probe(5, 3);
    const CgResult r = cg_solve(LinearOperator::identity(5), b, Vector::Zero(5), 1e-12, 10);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_LT((r.x - b).norm(), 1e-14);
}

TEST(CgSolve, Diagonal)
{
    const CgResult r = cg_solve(LinearOperator::diagonal(vec({2, 4})), vec({2, 4}), Vector::Zero(2), 1e-12, 10);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - vec({1, 1})).norm(), 1e-14);
}

TEST(CgSolve, TwoByTwo)
{
    const CgResult r = cg_solve(LinearOperator::dense(mat2(2, -1, -1, 2)), vec({1, 1}), Vector::Zero(2), 1e-10, 10);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - vec({1, 1})).norm(), 1e-10);
}

TEST(CgSolve, MatchesDirectSolve)
{
    const DenseMatrix a = oracle::random_spd(50, 11);
    const Vector b = seeded_probe(50, 12);
    const CgResult r = cg_solve(LinearOperator::dense(a), b, Vector::Zero(50), 1e-13, 500);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - oracle::dense_solve(a, b)).norm(), 1e-10 * (1 + b.norm()));
}

TEST(CgSolve, NonConvergenceIsFlagged)
{
    const DenseMatrix a = oracle::random_spd(40, 5, 1e-3);
    const CgResult r = cg_solve(LinearOperator::dense(a), seeded_probe(40, 1), Vector::Zero(40), 1e-14, 2);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 2);
}

TEST(GraphLaplacian, ConstantsInNullSpace)
{
    DenseMatrix w = oracle::random_spd(8, 3).cwiseAbs();
    w.diagonal().setZero();
    const LinearOperator l = graph_laplacian(w);
    EXPECT_LT(l.apply(Vector::Constant(8, 2.5)).norm(), 1e-13);
}

TEST(GraphLaplacian, TwoNodePath)
{
    const LinearOperator l = graph_laplacian(mat2(0, 1, 1, 0));
    EXPECT_EQ(l.to_dense(), mat2(1, -1, -1, 1));
    EXPECT_EQ(l.apply(vec({1, -1})), vec({2, -2}));
}

TEST(GraphLaplacian, RejectsBadWeights)
{
    EXPECT_THROW(graph_laplacian(mat2(0, 1, 0.5, 0)), StructuralError);
    EXPECT_THROW(graph_laplacian(mat2(0, -1, -1, 0)), StructuralError);
}

TEST(GraphLaplacian, QuadraticFormIsDoubleSum)
{
    DenseMatrix w = oracle::random_spd(9, 6).cwiseAbs();
    w.diagonal().setZero();
    const Vector u = seeded_probe(9, 2);
    const double eps = 10.0;
    const double form = eps * u.dot(graph_laplacian(w).apply(u));
    const double sum = oracle::dirichlet_double_sum(w, u, eps);
    EXPECT_GE(form, 0.0);
    EXPECT_NEAR(form, sum, 1e-10 * std::abs(sum));
}

TEST(PowerIteration, LargestEigenvalue)
{
    const DenseMatrix a = oracle::random_spd(30, 8);
    const double top = Eigen::SelfAdjointEigenSolver<DenseMatrix>(a).eigenvalues().maxCoeff();
    EXPECT_NEAR(power_iteration(LinearOperator::dense(a)).value, top, 1e-6 * top);
}
