#include "dcsplit/cli/commands.hpp"
#include "artifacts.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace dcsplit;
using namespace dcsplit::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / "dcsplit_unit_cli" / name;
    fs::remove_all(p);
    return p;
}

RunConfig tiny_scad(const fs::path& out)
{
    RunConfig c = parse_config_text("seed = 11\n"
                                    "[problem]\ntype = scad\nm = 20\nk = 60\ns = 3\nseeds = 2\n"
                                    "[solver]\nalgorithms = dca, bdca, bapdca-ls-t\nmax_iters = 3000\n");
    c.output.dir = out.string();
    return c;
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(Config, ParsesSectionsAndDefaults)
{
    const RunConfig c = parse_config_text("seed = 42\n[problem]\ntype = gl\nwidth = 16\nheight = 12\n"
                                          "[solver]\nalgorithms = bdca, bapdca-ls-t\ndt = 0.5\n"
                                          "criteria = grad:1e-3, dice:0.9\n[output]\ndir = x\n");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_TRUE(c.is_gl());
    EXPECT_EQ(c.problem.width, 16);
    EXPECT_EQ(c.algorithms(), (std::vector<std::string>{"bdca", "bapdca-ls-t"}));
    EXPECT_EQ(c.dt(), 0.5);
    EXPECT_EQ(c.lambda_bar_max(), 1.0);
    EXPECT_EQ(c.preconditioner(), "jacobi");
    EXPECT_EQ(c.sweeps(), 50);
    ASSERT_EQ(c.criteria().size(), 2u);
    EXPECT_EQ(c.criteria()[1].label(), "dice:0.9");
    EXPECT_EQ(c.output.dir, "x");
}

TEST(Config, ScadDefaults)
{
    const RunConfig c = parse_config_text("[problem]\ntype = scad\n");
    EXPECT_EQ(c.dt(), 6.0 - 1e-15);
    EXPECT_EQ(c.lambda_bar_max(), 5.0);
    EXPECT_NEAR(c.lambda_bar(), 0.618 * 5.0, 1e-15);
    EXPECT_EQ(c.preconditioner(), "richardson");
    EXPECT_EQ(c.algorithms().size(), 6u);
    EXPECT_EQ(scad_sizes(c).front().m, 180);
    EXPECT_EQ(scad_sizes(c).front().k, 640);
    EXPECT_EQ(scad_sizes(c).front().s, 20);
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(parse_config_text("[problem]\nstep_size = 3\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[mystery]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[solver]\ndt = fast\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[solver]\nalgorithms = dca, newton\n").validate(), ConfigError);
    EXPECT_THROW(parse_config_text("[problem]\ntype = lasso\n").validate(), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, CanonicalFormIsOrderIndependent)
{
    const RunConfig a = parse_config_text("[problem]\nm = 10\nk = 30\n[solver]\ndt = 2\n");
    const RunConfig b = parse_config_text("[solver]\ndt = 2\n[problem]\nk = 30\nm = 10\n");
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(fnv1a(a.canonical()), fnv1a(b.canonical()));
    EXPECT_NE(a.canonical(), parse_config_text("[solver]\ndt = 3\n").canonical());
}

TEST(Commands, AlgorithmDispatch)
{
    const RunConfig c = parse_config_text("[problem]\ntype = scad\n");
    const StopCriteria stop = stop_criteria(c);
    const SolverConfig t = solver_config(c, "bapdca-ls-t", stop);
    EXPECT_EQ(t.anchor, Anchor::t_mode);
    ASSERT_TRUE(t.linesearch.has_value());
    EXPECT_EQ(t.linesearch->lambda_bar_max, 5.0);
    const SolverConfig n = solver_config(c, "bapdca-n", stop);
    EXPECT_EQ(n.anchor, Anchor::n_mode);
    EXPECT_FALSE(n.linesearch.has_value());
    EXPECT_EQ(n.preconditioner.kind, PreconditionerKind::richardson);
    EXPECT_EQ(solver_config(c, "badca", stop).preconditioner.kind, PreconditionerKind::exact);
    EXPECT_TRUE(is_baseline("pdcae"));
    EXPECT_FALSE(is_baseline("badca-ls"));
}

TEST(ScadBench, DeterministicOutputs)
{
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    std::ostringstream log;
    ASSERT_EQ(cmd_scad_bench(tiny_scad(a), log), 0);
    ASSERT_EQ(cmd_scad_bench(tiny_scad(b), log), 0);
    std::string why;
    EXPECT_TRUE(artifacts::same_outputs(a, b, &why)) << why;
    for (const char* f : {"runs.csv", "aggregate.csv", "summary.json", "timing.json"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
    EXPECT_NE(artifacts::slurp(a / "summary.json").find("config_hash"), std::string::npos);
}

TEST(ScadBench, SingleAlgorithmSingleSeedGivesOneRow)
{
    const fs::path out = scratch("single");
    RunConfig c = tiny_scad(out);
    c.problem.seeds = 1;
    c.problem.l1_reference = false;
    c.solver.algorithms = {"bdca"};
    std::ostringstream log;
    ASSERT_EQ(cmd_scad_bench(c, log), 0);
    EXPECT_EQ(count_lines(artifacts::slurp(out / "runs.csv")), 2);
}

TEST(ScadBench, StrictInfeasibleConfigThrows)
{
    RunConfig c = tiny_scad(scratch("strict"));
    c.solver.strict = true;
    std::ostringstream log;
    EXPECT_THROW(cmd_scad_bench(c, log), StructuralError);
}

TEST(GlSegment, NestedCriteriaAndMasks)
{
    const fs::path out = scratch("gl");
    RunConfig c = parse_config_text("seed = 7\n[problem]\ntype = gl\nwidth = 24\nheight = 24\n"
                                    "[solver]\nalgorithms = bapdca-ls-t\ncriteria = inc:1e-1, inc:1e-5\n"
                                    "max_iters = 400\n");
    c.output.dir = out.string();
    std::ostringstream log;
    ASSERT_EQ(cmd_gl_segment(c, log), 0);
    const std::string csv = artifacts::slurp(out / "segment.csv");
    std::istringstream in(csv);
    std::string header, loose, tight;
    std::getline(in, header);
    std::getline(in, loose);
    std::getline(in, tight);
    auto iterations = [](const std::string& row) { return std::stoi(split_list(row)[2]); };
    EXPECT_LT(iterations(loose), iterations(tight));
    EXPECT_TRUE(fs::exists(out / "mask_bapdca-ls-t.pgm"));
}

TEST(GlSegment, UnreadableImage)
{
    RunConfig c = parse_config_text("[problem]\ntype = gl\nimage = /nonexistent/picture.pgm\n");
    c.output.dir = scratch("bad_image").string();
    std::ostringstream log;
    EXPECT_THROW(cmd_gl_segment(c, log), ImageError);
}

TEST(Diag, CorruptedRunReportsFailure)
{
    RunConfig c = parse_config_text("[diag]\ncorrupt = true\norder = false\ngradients = false\n");
    c.output.dir = scratch("diag_corrupt").string();
    std::ostringstream log;
    EXPECT_EQ(cmd_diag(c, log), 1);
    EXPECT_NE(log.str().find("descent_i"), std::string::npos);
}
