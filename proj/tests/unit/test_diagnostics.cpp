#include "dcsplit/cli/commands.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dcsplit;

namespace {

std::vector<StepData> scalar_run_steps(int count)
{
    const Problem p = scalar_quadratic();
    SolverConfig cfg;
    cfg.dt = 1.0;
    Stepper st(p, cfg, Vector::Ones(1), Vector::Ones(1));
    std::vector<StepData> out;
    for (int i = 0; i < count; ++i)
    {
        const Vector um = st.u_nm1(), un = st.u_n();
        const StepOutcome o = st.step();
        out.push_back({um, un, o.y, o.u_next, o.lambda, 1.0, 0.0, 0.0, Anchor::n_mode});
    }
    return out;
}

} // namespace

TEST(RateFit, Geometric)
{
    std::vector<double> e;
    for (int n = 1; n <= 60; ++n)
        e.push_back(std::pow(0.5, n));
    const RateFit f = rate_fit(e);
    EXPECT_EQ(f.kind, RateClass::linear);
    EXPECT_NEAR(f.eta, 0.5, 0.01);
}

TEST(RateFit, PowerLaw)
{
    std::vector<double> e;
    for (int n = 1; n <= 200; ++n)
        e.push_back(std::pow(static_cast<double>(n), -2.0));
    const RateFit f = rate_fit(e);
    EXPECT_EQ(f.kind, RateClass::sublinear);
    EXPECT_NEAR(f.exponent, 2.0, 0.1);
}

TEST(RateFit, FiniteTerminationAndShortTrace)
{
    std::vector<double> e{1, 0.5, 0.3, 0.2, 0.1};
    e.resize(30, 0.0);
    EXPECT_EQ(rate_fit(e).kind, RateClass::finite_termination);
    EXPECT_EQ(rate_fit({1, 0.5, 0.25}).kind, RateClass::inconclusive);
}

TEST(RateFit, ScalarQuadraticRunIsLinear)
{
    SolverConfig cfg;
    cfg.dt = 1.0;
    cfg.keep_iterates = true;
    const SolveResult r = run(scalar_quadratic(), cfg, Vector::Ones(1));
    const RateFit f = rate_fit_iterates(r.iterates);
    EXPECT_EQ(f.kind, RateClass::linear);
    EXPECT_GT(f.eta, 0.0);
    EXPECT_LT(f.eta, 2.0 / 3.0);
}

TEST(FdOracle, QuadraticAndSecondOrderAccuracy)
{
    const Vector u = seeded_probe(5, 2);
    const Vector g = fd_gradient_oracle([](const Vector& v) { return 0.5 * v.squaredNorm(); }, u);
    EXPECT_LT((g - u).norm(), 1e-9);
    // cubic: error of central differences is h²·f'''/6 = h²
    auto cubic = [](const Vector& v) { return v.array().cube().sum(); };
    const Vector exact = 3.0 * u.array().square().matrix();
    const double e1 = (fd_gradient_oracle(cubic, u, 1e-2) - exact).norm();
    const double e2 = (fd_gradient_oracle(cubic, u, 5e-3) - exact).norm();
    EXPECT_NEAR(e1 / e2, 4.0, 0.05);
    EXPECT_NEAR(e1, 1e-4 * std::sqrt(5.0), 1e-8);
}

TEST(FdOracle, BreakpointResampling)
{
    Vector u(3);
    u << 0.1, 2.5e-4, -0.2;
    const double h = fd_step(u);
    EXPECT_TRUE(near_breakpoint(u, {2.5e-4}, h));
    int calls = 0;
    const Vector moved = resample_away_from_breakpoints(u, {2.5e-4}, [&] { return 0.05 + 0.01 * ++calls; });
    EXPECT_FALSE(near_breakpoint(moved, {2.5e-4}, fd_step(moved)));
    EXPECT_EQ(moved[0], 0.1);
    EXPECT_EQ(calls, 1);
}

TEST(StepInvariants, ScalarRunPassesEverywhere)
{
    const Problem p = scalar_quadratic();
    for (const StepData& st : scalar_run_steps(40))
    {
        const StepChecks c = check_step_invariants(p, st);
        EXPECT_EQ(c.flags(), 0u);
        EXPECT_TRUE(c.checked[inv_descent_i]);
        EXPECT_TRUE(c.checked[inv_descent_ii]);
    }
}

TEST(StepInvariants, CorruptedStepFailsDescent)
{
    const Problem p = scalar_quadratic();
    for (const StepData& st : scalar_run_steps(5))
    {
        const StepChecks c = check_step_invariants(p, corrupt_step(p, st));
        EXPECT_FALSE(c.ok(inv_descent_i));
        EXPECT_FALSE(c.ok(inv_descent_ii));
    }
}

TEST(StepInvariants, FallbackStepIsVacuousCertificate)
{
    const Problem p = quadratic_cubic(6, 2);
    StepData st{0.2 * seeded_probe(6, 1), 0.2 * seeded_probe(6, 2), 0.2 * seeded_probe(6, 3),
                Vector(), 0.0, 0.2, p.lipschitz_L, 0.2, Anchor::t_mode};
    st.u_next = st.y;
    const StepChecks c = check_step_invariants(p, st);
    EXPECT_TRUE(c.checked[inv_armijo_certificate]);
    EXPECT_TRUE(c.ok(inv_armijo_certificate));
}

TEST(StepInvariants, BadExtrapolationFailsCertificate)
{
    const Problem p = scalar_quadratic();
    StepData st = scalar_run_steps(1).front();
    st.lambda = 1.0;
    st.alpha = 0.2;
    st.u_next = st.y + 5.0 * (st.y - st.u_n);
    EXPECT_FALSE(check_step_invariants(p, st).ok(inv_armijo_certificate));
}

TEST(Tracker, LyapunovIncreaseAndPartialSumFlagged)
{
    InvariantTracker t(0.2, 0.2);
    StepChecks clean;
    EXPECT_EQ(t.record(0, clean, 2.0, 1.0, 0.01, 0.5, 1.0), 0u);
    EXPECT_EQ(t.record(1, clean, 1.0, 0.9, 0.01, 0.5, 1.0), 0u);
    const std::uint32_t up = t.record(2, clean, 0.9, 1.5, 0.01, 0.5, 1.0);
    EXPECT_TRUE(up & invariant_bit(inv_lyapunov_decrease));
    const std::uint32_t big = t.record(3, clean, 1.0, 0.8, 1e6, 0.5, 1.0);
    EXPECT_TRUE(big & invariant_bit(inv_partial_sum_bound));
    const InvariantReport& r = t.report();
    EXPECT_FALSE(r.all_pass());
    EXPECT_EQ(r.stats[inv_lyapunov_decrease].first_violation, 2);
    EXPECT_EQ(r.failing(), (std::vector<std::string>{"lyapunov_decrease", "partial_sum_bound"}));
}

TEST(Tracker, PartialSumConstant)
{
    // K = (1+λ)²/(αλmin + 4/(3δt) − L/2 − L(1+λ)²)
    EXPECT_NEAR(partial_sum_constant(1.0, 0.0, 0.2, 0.5, 1.0), 4.0 / (0.1 + 4.0 / 3.0), 1e-15);
    EXPECT_FALSE(std::isfinite(partial_sum_constant(1.0, 10.0, 0.2, 0.5, 1.0)));
}

TEST(NegativeControls, EveryMonitorFires)
{
    const auto fired = cli::negative_controls(1);
    EXPECT_EQ(fired.size(), static_cast<std::size_t>(inv_count));
    for (const auto& [name, ok] : fired)
        EXPECT_TRUE(ok) << name;
}

TEST(GradientChecks, AllFamiliesWithinTolerance)
{
    for (const auto& g : cli::standard_gradient_checks(3))
        EXPECT_LE(g.max_rel_error, 1e-6) << g.name;
}
