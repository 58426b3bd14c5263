#include "dcsplit/baselines.hpp"
#include "dcsplit/problems/scad.hpp"
#include "dcsplit/problems/toy.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dcsplit;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

LineSearchConfig plain_config(double alpha, double beta, double start)
{
    LineSearchConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.lambda_bar_max = start;
    c.use_quadratic_init = false;
    return c;
}

ScadInstance small_scad(std::uint64_t seed) { return gen_scad(30, 90, 5, seed); }

} // namespace

TEST(QuadInit, Examples)
{
    EXPECT_DOUBLE_EQ(*quad_init(0.0, -1.0, 0.0, 1.0), 0.5);
    EXPECT_FALSE(quad_init(0.0, 0.0, 1.0, 1.0).has_value());
    EXPECT_DOUBLE_EQ(*quad_init(1.0, -2.0, 0.0, 1.0), 1.0);
    EXPECT_FALSE(quad_init(0.0, -1.0, -2.0, 1.0).has_value());
}

TEST(QuadInit, ExactOnQuadraticProbes)
{
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> unif(0.1, 3.0);
    for (int k = 0; k < 100; ++k)
    {
        const double a = unif(gen), b = -unif(gen), c = unif(gen) - 1.5, bar = unif(gen);
        auto e = [&](double l) { return a * l * l + b * l + c; };
        const double vertex = -b / (2 * a);
        EXPECT_NEAR(*quad_init(e(0), b, e(bar), bar), vertex, 1e-12 * vertex);
    }
}

TEST(ArmijoSearch, AcceptsFirstTrial)
{
    const double dd = 2.0;
    const LineSearchResult r =
        armijo_search([&](double l) { return -l * dd; }, 0.0, -dd, dd, plain_config(0.2, 0.8, 1.0));
    EXPECT_EQ(r.lambda, 1.0);
    EXPECT_EQ(r.evals, 1);
}

TEST(ArmijoSearch, FallbackOnIncreasingEnergy)
{
    LineSearchConfig c = plain_config(0.2, 0.8, 1.0);
    c.mode = LineSearchMode::til_fallback;
    const LineSearchResult r = armijo_search([](double l) { return l; }, 0.0, 1.0, 1.0, c);
    EXPECT_EQ(r.lambda, 0.0);
    EXPECT_TRUE(r.fallback);
    c.mode = LineSearchMode::standard;
    EXPECT_THROW(armijo_search([](double l) { return l; }, 0.0, 1.0, 1.0, c), LineSearchExhausted);
}

TEST(ArmijoSearch, BacktracksToQuarter)
{
    const double dd = 1.0;
    const LineSearchResult r = armijo_search([&](double l) { return l * (l - 0.5) * dd; }, 0.0, -0.5 * dd, dd,
                                             plain_config(0.2, 0.5, 1.0));
    EXPECT_EQ(r.lambda, 0.25);
    EXPECT_EQ(r.evals, 3);
}

TEST(ArmijoSearch, InterpolatedStartCappedAtMax)
{
    LineSearchConfig c;
    c.lambda_bar_max = 5.0;
    c.lambda_bar = 0.618 * 5.0;
    // e(λ) = λ² − 20λ has its vertex at 10
    const LineSearchResult r = armijo_search([](double l) { return l * l - 20 * l; }, 0.0, -20.0, 1.0, c);
    EXPECT_NEAR(*r.interpolated, 10.0, 1e-12);
    EXPECT_EQ(r.lambda_start, 5.0);
    EXPECT_EQ(r.lambda, 5.0);
}

TEST(ArmijoSearch, ConfigValidation)
{
    LineSearchConfig c;
    c.beta = 1.0;
    EXPECT_THROW(c.validate(), StructuralError);
    c = {};
    c.lambda_bar = 6.0;
    EXPECT_THROW(c.validate(), StructuralError);
}

TEST(Armijo, CertificateOnSurrogate)
{
    const Problem p = quadratic_cubic(10, 4);
    const SurrogateState s{0.3 * seeded_probe(10, 1), 0.3 * seeded_probe(10, 2), 0.2};
    const SurrogateEnergy en(p, s);
    const Vector y = 0.3 * seeded_probe(10, 3);
    const Vector d = -0.05 * en.grad_En(y);
    LineSearchConfig c;
    c.lambda_bar_max = 2.0;
    c.lambda_bar = 1.0;
    const LineSearchResult r = armijo(s, p, y, d, c);
    EXPECT_GT(r.lambda, 0.0);
    EXPECT_LE(en.En(y + r.lambda * d), en.En(y) - c.alpha * r.lambda * d.squaredNorm() + 1e-12);
}

TEST(MaxStepBound, Examples)
{
    EXPECT_NEAR(max_step_bound(3.0, 1.0 / 9.0, Anchor::n_mode), std::sqrt(3.5) - 1, 1e-14);
    EXPECT_NEAR(max_step_bound(3.0, 1.0 / 9.0, Anchor::n_mode), 0.8708, 1e-4);
    EXPECT_NEAR(max_step_bound(3.0, 1.0 / 9.0, Anchor::t_mode), std::sqrt(3.5) - 1, 1e-14);
    const double near_limit = dt_bound(1.0 / 9.0) * (1 - 1e-12);
    EXPECT_NEAR(max_step_bound(near_limit, 1.0 / 9.0, Anchor::n_mode), std::sqrt(1.5) - 1, 1e-6);
    EXPECT_GT(max_step_bound(near_limit, 1.0 / 9.0, Anchor::n_mode), 0.2247);
    EXPECT_THROW(max_step_bound(6.0, 1.0 / 9.0, Anchor::n_mode), StructuralError);
}

TEST(Step, ScalarQuadraticFirstStep)
{
    const Problem p = scalar_quadratic();
    SolverConfig cfg;
    cfg.dt = 1.0;
    Stepper st(p, cfg, scalar(1), scalar(1));
    const StepOutcome out = st.step();
    EXPECT_NEAR(out.y[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(out.u_next[0], 2.0 / 3.0, 1e-15);
    EXPECT_EQ(out.lambda, 0.0);
}

TEST(Step, ScalarRecursionMatchesOracle)
{
    const Problem p = scalar_quadratic();
    SolverConfig cfg;
    cfg.dt = 1.0;
    Stepper st(p, cfg, scalar(1), scalar(1));
    double u = 1, um = 1;
    for (int n = 0; n < 30; ++n)
    {
        const double next = oracle::scalar_quadratic_step(u, um);
        st.step();
        EXPECT_NEAR(st.u_n()[0], next, 1e-14 * (1 + std::abs(next)));
        um = u;
        u = next;
    }
}

TEST(Step, UpdateIsExtrapolationAlongD)
{
    const Problem p = quadratic_cubic(10, 4);
    SolverConfig cfg;
    cfg.dt = 0.2;
    cfg.preconditioner = PreconditionerSpec::sgs();
    LineSearchConfig ls;
    ls.lambda_bar_max = 0.5;
    ls.lambda_bar = 0.3;
    cfg.linesearch = ls;
    const Vector u0 = 0.5 * seeded_probe(10, 1);
    Stepper st(p, cfg, u0, u0);
    for (int n = 0; n < 10; ++n)
    {
        const Vector un = st.u_n();
        const StepOutcome out = st.step();
        const Vector d = out.y - un;
        EXPECT_LT((out.u_next - (un + (1 + out.lambda) * d)).norm(), 1e-13);
        EXPECT_GE(out.lambda, 0.0);
        EXPECT_LE(out.lambda, 0.5);
    }
}

TEST(Run, StationaryStartStopsImmediately)
{
    const Problem p = scalar_quadratic();
    SolverConfig cfg;
    const SolveResult r = run(p, cfg, scalar(0));
    EXPECT_EQ(r.iterations, 1);
    EXPECT_EQ(r.stop_reason, StopReason::d_zero);
}

TEST(Run, ScalarQuadraticConverges)
{
    const Problem p = scalar_quadratic();
    SolverConfig cfg;
    cfg.dt = 1.0;
    cfg.keep_iterates = true;
    const SolveResult r = run(p, cfg, scalar(1));
    EXPECT_EQ(r.stop_reason, StopReason::rel_increment);
    EXPECT_TRUE(r.report.all_pass());
    EXPECT_LT(std::abs(r.u_final[0]), 1e-10);
    EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations));
    for (std::size_t n = 1; n < r.iterates.size(); ++n)
        EXPECT_LE(std::abs(r.iterates[n][0]), std::pow(2.0 / 3.0, static_cast<double>(n)) + 1e-15);
    for (std::size_t n = 1; n < r.trace.size(); ++n)
        EXPECT_LE(r.trace[n].lyapunov, r.trace[n - 1].lyapunov + 1e-15);
}

TEST(Run, StrictModeRejectsLargeStep)
{
    const Problem p = quadratic_cubic(5, 1);
    SolverConfig cfg;
    cfg.bound_mode = BoundMode::strict_theory;
    cfg.dt = 1.0;
    EXPECT_THROW(run(p, cfg, seeded_probe(5, 1)), StructuralError);
    cfg.dt = 0.2;
    LineSearchConfig ls;
    ls.lambda_bar_max = 5.0;
    cfg.linesearch = ls;
    EXPECT_THROW(run(p, cfg, seeded_probe(5, 1)), StructuralError);
}

TEST(Run, DivergenceGuard)
{
    // explicit part unstable at dt = 10: a root of 1.2z² + 7.73z − 3.93 lies below −1
    Problem p = quadratic_problem(LinearOperator::identity(3), Vector::Zero(3));
    p.eval_F = [](const Vector& u) { return 2.0 * u.squaredNorm(); };
    p.grad_f = [](const Vector& u) -> Vector { return 4.0 * u; };
    p.lipschitz_L = 4.0;
    SolverConfig cfg;
    cfg.dt = 10.0;
    cfg.monitor = false;
    const SolveResult r = run(p, cfg, seeded_probe(3, 1));
    EXPECT_EQ(r.stop_reason, StopReason::diverged);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Run, ScadDeskMonotoneLyapunov)
{
    const ScadInstance inst = gen_scad(180, 640, 20, 1);
    const Problem p = scad_problem(inst);
    SolverConfig cfg;
    cfg.dt = 1.0;
    cfg.preconditioner = PreconditionerSpec::richardson();
    LineSearchConfig ls;
    ls.lambda_bar_max = 1.2;
    ls.lambda_bar = 0.618 * 1.2;
    cfg.linesearch = ls;
    cfg.bound_mode = BoundMode::strict_theory;
    cfg.stop.max_iters = 20000;
    const SolveResult r = run(p, cfg, Vector::Zero(640));
    EXPECT_EQ(r.stop_reason, StopReason::rel_increment);
    EXPECT_TRUE(r.report.all_pass());
    for (std::size_t n = 1; n < r.trace.size(); ++n)
        EXPECT_LE(r.trace[n].lyapunov, r.trace[n - 1].lyapunov + 1e-9 * (1 + std::abs(r.trace[n - 1].lyapunov)));
}

TEST(Subproblem, ClosedFormMatchesNewtonCg)
{
    const ScadInstance inst = small_scad(2);
    const Problem p = scad_problem(inst);
    const double dt = 2.0;
    const Preconditioner rich = Preconditioner::bind(PreconditionerSpec::richardson(), p.linear->a, dt);
    ASSERT_TRUE(rich.is_diagonal());
    DenseMatrix big = DenseMatrix::Identity(90, 90) * rich.diagonal_values()[0];
    const SurrogateState s{0.05 * seeded_probe(90, 1), 0.05 * seeded_probe(90, 2), dt};
    const Vector f_n = p.grad_f(s.u_n), f_nm1 = p.grad_f(s.u_nm1);
    const Vector closed = solve_subproblem(p, &rich, s, s.u_n, f_n, f_nm1);
    // Newton on ½yᵀ𝕄y − rᵀy + μH_α(y), r = M û + bⁿ
    const Vector b = rhs_bn(s, p.linear->b0, f_n, f_nm1);
    const Vector r = rich.apply_M(s.u_n) + b;
    const SeparablePart& g = *p.separable;
    auto value = [&](const Vector& y) { return 0.5 * y.dot(big * y) - r.dot(y) + g.value(y); };
    auto grad = [&](const Vector& y) -> Vector { return big * y - r + g.gradient(y); };
    auto hess = [&](const Vector& y, const Vector& v) -> Vector { return big * v + g.curvature(y).cwiseProduct(v); };
    NewtonOptions opt;
    opt.scale = r.norm();
    const NewtonResult nr = newton_cg_minimize(value, grad, hess, s.u_n, opt);
    ASSERT_TRUE(nr.converged);
    EXPECT_LE((closed - nr.x).norm(), 1e-8 * (1 + closed.norm()));
}

TEST(Baselines, BdcaWithoutStepEqualsDca)
{
    const Problem p = scad_problem(small_scad(4));
    BaselineConfig c;
    c.stop.max_iters = 300;
    c.keep_iterates = true;
    const SolveResult dca = dca_run(p, c, Vector::Zero(90));
    c.lambda_bar = 0.0;
    const SolveResult bdca = bdca_run(p, c, Vector::Zero(90));
    ASSERT_EQ(dca.iterates.size(), bdca.iterates.size());
    for (std::size_t i = 0; i < dca.iterates.size(); ++i)
        EXPECT_EQ(dca.iterates[i], bdca.iterates[i]);
}

TEST(Baselines, PdcaeWithoutExtrapolationEqualsDca)
{
    const Problem p = scad_problem(small_scad(5));
    BaselineConfig c;
    c.stop.max_iters = 300;
    c.keep_iterates = true;
    c.rho = p.baseline->rho_dca;
    const SolveResult dca = dca_run(p, c, Vector::Zero(90));
    c.extrapolate = false;
    const SolveResult pd = pdcae_run(p, c, Vector::Zero(90));
    ASSERT_EQ(dca.iterates.size(), pd.iterates.size());
    for (std::size_t i = 0; i < dca.iterates.size(); ++i)
        EXPECT_EQ(dca.iterates[i], pd.iterates[i]);
}

TEST(Baselines, BdcaBeatsDcaAndBothDescend)
{
    const Problem p = scad_problem(small_scad(6));
    BaselineConfig c;
    c.stop.max_iters = 20000;
    const SolveResult dca = dca_run(p, c, Vector::Zero(90));
    const SolveResult bdca = bdca_run(p, c, Vector::Zero(90));
    EXPECT_EQ(dca.stop_reason, StopReason::rel_increment);
    EXPECT_EQ(bdca.stop_reason, StopReason::rel_increment);
    EXPECT_LT(bdca.iterations, dca.iterations);
    for (const SolveResult* r : {&dca, &bdca})
        for (std::size_t n = 1; n < r->trace.size(); ++n)
            EXPECT_LE(r->trace[n].E, r->trace[n - 1].E + 1e-12);
}
