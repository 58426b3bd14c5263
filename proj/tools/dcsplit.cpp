// dcsplit command-line harness.

#include "dcsplit/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace dcsplit;
using namespace dcsplit::cli;

struct Flags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool strict = false;
    std::string algorithms;
    std::optional<double> scale;
};

RunConfig resolve(const Flags& f)
{
    RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.seed)
        c.seed = *f.seed;
    if (!f.out.empty())
        c.output.dir = f.out;
    if (f.strict)
        c.solver.strict = true;
    if (!f.algorithms.empty())
        c.solver.algorithms = split_list(f.algorithms);
    if (f.scale)
        c.problem.scale = *f.scale;
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Preconditioned second-order convex splitting benchmarks"};
    app.require_subcommand(1);
    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "INI configuration file");
        sub->add_option("--seed", flags.seed, "Base seed");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_flag("--strict", flags.strict, "Theory bounds and invariant violations are hard failures");
        sub->add_option("--algorithms", flags.algorithms, "Comma-separated algorithm list");
        sub->add_option("--scale", flags.scale, "SCAD size scale");
    };
    CLI::App* bench = app.add_subcommand("scad-bench", "SCAD benchmark tables");
    CLI::App* seg = app.add_subcommand("gl-segment", "Graph Ginzburg-Landau segmentation");
    CLI::App* solve = app.add_subcommand("solve", "Single run with trace");
    CLI::App* diag = app.add_subcommand("diag", "Invariant and oracle audit");
    for (CLI::App* sub : {bench, seg, solve, diag})
        add_common(sub);
    CLI11_PARSE(app, argc, argv);

    try
    {
        RunConfig c = resolve(flags);
        if (bench->parsed())
            return cmd_scad_bench(c);
        if (seg->parsed())
        {
            if (flags.config.empty())
                c.problem.type = "gl";
            return cmd_gl_segment(c);
        }
        if (solve->parsed())
            return cmd_solve(c);
        return cmd_diag(c);
    }
    catch (const InvariantViolation& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    catch (const LineSearchExhausted& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    catch (const ConfigError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const ImageError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const StructuralError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
