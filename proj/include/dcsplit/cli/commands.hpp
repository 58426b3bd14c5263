#ifndef DCSPLIT_CLI_COMMANDS_HPP
#define DCSPLIT_CLI_COMMANDS_HPP

// scad-bench, gl-segment, solve and diag. Each returns a process exit code;
// CSV rows end with wall_time_s, JSON summaries carry no timings (those go to
// timing.json) so identical (config, seed) pairs give identical bytes.

#include "dcsplit/baselines.hpp"
#include "dcsplit/cli/config.hpp"
#include "dcsplit/problems/gl.hpp"
#include "dcsplit/problems/scad.hpp"
#include "dcsplit/problems/toy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#ifndef DCSPLIT_VERSION
#define DCSPLIT_VERSION "0.1.0"
#endif

namespace dcsplit::cli {

using json = nlohmann::ordered_json;

inline std::string version_string() { return DCSPLIT_VERSION; }

inline bool is_baseline(const std::string& alg) { return alg == "dca" || alg == "bdca" || alg == "pdcae"; }

inline PreconditionerSpec preconditioner_spec(const RunConfig& c, const std::string& alg)
{
    if (alg.rfind("badca", 0) == 0)
        return PreconditionerSpec::exact(c.solver.cg_tol);
    const std::string kind = c.preconditioner();
    if (kind == "exact")
        return PreconditionerSpec::exact(c.solver.cg_tol);
    if (kind == "jacobi")
        return PreconditionerSpec::jacobi(c.solver.c_tilde, c.sweeps());
    if (kind == "sgs")
        return PreconditionerSpec::sgs(c.sweeps());
    return PreconditionerSpec::richardson(c.solver.lambda_shift, c.sweeps());
}

inline StopCriteria stop_criteria(const RunConfig& c)
{
    StopCriteria s;
    s.rel_increment_tol = c.solver.rel_increment_tol;
    s.grad_norm_tol = c.solver.grad_tol;
    s.increment_tol = c.solver.increment_tol;
    s.dice_bound = c.solver.dice_bound;
    s.max_iters = c.max_iters();
    return s;
}

inline SolverConfig solver_config(const RunConfig& c, const std::string& alg, const StopCriteria& stop)
{
    SolverConfig s;
    s.dt = c.dt();
    s.bound_mode = c.solver.strict ? BoundMode::strict_theory : BoundMode::experiment;
    s.anchor = alg.size() >= 2 && alg.compare(alg.size() - 2, 2, "-t") == 0 ? Anchor::t_mode : Anchor::n_mode;
    s.preconditioner = preconditioner_spec(c, alg);
    if (alg.find("-ls") != std::string::npos)
    {
        LineSearchConfig ls;
        ls.alpha = c.solver.alpha;
        ls.beta = c.solver.beta;
        ls.lambda_bar_max = c.lambda_bar_max();
        ls.lambda_bar = c.lambda_bar();
        ls.use_quadratic_init = c.solver.quad_init;
        ls.max_backtracks = c.solver.max_backtracks;
        s.linesearch = ls;
    }
    s.stop = stop;
    return s;
}

inline BaselineConfig baseline_config(const RunConfig& c, const StopCriteria& stop)
{
    BaselineConfig b;
    b.stop = stop;
    b.alpha = c.solver.alpha;
    b.beta = c.solver.beta;
    b.lambda_bar = c.lambda_bar_max();
    b.max_backtracks = c.solver.max_backtracks;
    b.restart_period = c.solver.restart_period;
    return b;
}

inline SolveResult run_algorithm(const Problem& p, const RunConfig& c, const std::string& alg, const Vector& u0,
                                 const StopCriteria& stop, bool keep_iterates = false)
{
    if (is_baseline(alg))
    {
        BaselineConfig b = baseline_config(c, stop);
        b.keep_iterates = keep_iterates;
        if (alg == "dca")
            return dca_run(p, b, u0);
        if (alg == "bdca")
            return bdca_run(p, b, u0);
        return pdcae_run(p, b, u0);
    }
    SolverConfig s = solver_config(c, alg, stop);
    s.keep_iterates = keep_iterates;
    return run(p, s, u0);
}

inline json report_json(const InvariantReport& r)
{
    json out = json::object();
    for (int i = 0; i < inv_count; ++i)
    {
        const InvariantStat& s = r.stats[i];
        out[invariant_name(i)] = {{"checks", s.checks},
                                  {"violations", s.violations},
                                  {"worst_margin", std::isfinite(s.worst_margin) ? json(s.worst_margin) : json()},
                                  {"first_violation", s.first_violation},
                                  {"skipped", s.skipped}};
    }
    out["all_pass"] = r.all_pass();
    return out;
}

inline std::filesystem::path prepare_dir(const std::string& dir)
{
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec)
        throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
    return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

inline json header_json(const RunConfig& c, const std::string& command)
{
    return {{"command", command},
            {"version", version_string()},
            {"config_hash", hex64(fnv1a(c.canonical()))},
            {"seed", c.seed}};
}

inline std::string trace_csv(const SolveResult& r)
{
    std::string out = "n,E,lyapunov,step_norm,d_norm,lambda,grad_norm,ls_evals,invariant_flags,ls_fallback\n";
    for (const auto& t : r.trace)
        out += std::to_string(t.n) + "," + fmt(t.E) + "," + fmt(t.lyapunov) + "," + fmt(t.step_norm) + "," +
               fmt(t.d_norm) + "," + fmt(t.lambda) + "," + fmt(t.grad_norm) + "," + std::to_string(t.ls_evals) +
               "," + std::to_string(t.invariant_flags) + "," + (t.ls_fallback ? "1" : "0") + "\n";
    return out;
}

inline double final_energy(const Problem& p, const SolveResult& r)
{
    return r.trace.empty() ? energy_E(p, r.u_final) : r.trace.back().E;
}

// ---------------------------------------------------------------- scad-bench

struct ScadSize
{
    long m, k, s;
};

inline std::vector<ScadSize> scad_sizes(const RunConfig& c)
{
    if (c.problem.m > 0)
    {
        if (c.problem.k <= 0 || c.problem.s < 0 || c.problem.s > c.problem.k)
            throw ConfigError("problem.m, problem.k and problem.s must describe a valid instance");
        return {{c.problem.m, c.problem.k, c.problem.s}};
    }
    std::vector<ScadSize> out;
    for (int i : c.problem.sizes)
    {
        const double f = i * c.problem.scale;
        ScadSize sz{std::lround(720 * f), std::lround(2560 * f), std::lround(80 * f)};
        if (sz.m < 1 || sz.k < 1)
            throw ConfigError("problem.scale too small for size " + std::to_string(i));
        out.push_back(sz);
    }
    return out;
}

struct BenchRow
{
    std::string algorithm;
    ScadSize size;
    std::uint64_t seed;
    int iterations;
    std::string stop;
    double energy;
    double grad_norm;
    long sparsity;
    bool pass;
    double wall;
    json report;
    std::vector<std::string> warnings;
};

inline double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline int cmd_scad_bench(const RunConfig& c, std::ostream& log = std::cout)
{
    c.validate();
    if (c.is_gl())
        throw ConfigError("scad-bench needs problem.type = scad");
    const auto dir = prepare_dir(c.output.dir);
    std::vector<std::string> algs = c.algorithms();
    std::vector<BenchRow> rows;
    const StopCriteria stop = stop_criteria(c);

    for (const ScadSize& sz : scad_sizes(c))
        for (int j = 0; j < c.problem.seeds; ++j)
        {
            const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(j);
            const ScadInstance inst =
                gen_scad(sz.m, sz.k, sz.s, seed, c.problem.mu, c.problem.theta, c.problem.huber_alpha);
            const Problem p = scad_problem(inst);
            const Vector u0 = Vector::Zero(sz.k);
            const double tol = c.problem.sparsity_tol > 0.0 ? c.problem.sparsity_tol : inst.huber_alpha;
            for (const auto& alg : algs)
            {
                const SolveResult r = run_algorithm(p, c, alg, u0, stop);
                rows.push_back({alg, sz, seed, r.iterations, to_string(r.stop_reason), final_energy(p, r),
                                stationarity(p, r.u_final), static_cast<long>(sparsity(r.u_final, tol)),
                                r.report.all_pass(), r.wall_time, report_json(r.report), r.warnings});
                log << alg << " m=" << sz.m << " k=" << sz.k << " seed=" << seed << " iters=" << r.iterations
                    << " stop=" << to_string(r.stop_reason) << "\n";
            }
            if (c.problem.l1_reference)
            {
                const Problem pl = scad_l1_problem(inst);
                const SolveResult r = dca_run(pl, baseline_config(c, stop), u0);
                const double tol1 = c.problem.sparsity_tol > 0.0 ? c.problem.sparsity_tol : 1e-6;
                rows.push_back({"dca-l1", sz, seed, r.iterations, to_string(r.stop_reason), final_energy(pl, r),
                                stationarity(pl, r.u_final), static_cast<long>(sparsity(r.u_final, tol1)),
                                r.report.all_pass(), r.wall_time, report_json(r.report), r.warnings});
            }
        }
    if (c.problem.l1_reference)
        algs.push_back("dca-l1");

    std::string csv = "algorithm,m,k,s,seed,iterations,stop_reason,energy,grad_norm,sparsity,invariants_pass,"
                      "wall_time_s\n";
    json runs = json::array();
    json timing = json::array();
    for (const auto& r : rows)
    {
        csv += r.algorithm + "," + std::to_string(r.size.m) + "," + std::to_string(r.size.k) + "," +
               std::to_string(r.size.s) + "," + std::to_string(r.seed) + "," + std::to_string(r.iterations) + "," +
               r.stop + "," + fmt(r.energy) + "," + fmt(r.grad_norm) + "," + std::to_string(r.sparsity) + "," +
               (r.pass ? "1" : "0") + "," + fmt(r.wall) + "\n";
        runs.push_back({{"algorithm", r.algorithm},
                        {"m", r.size.m},
                        {"k", r.size.k},
                        {"s", r.size.s},
                        {"seed", r.seed},
                        {"iterations", r.iterations},
                        {"stop_reason", r.stop},
                        {"energy", r.energy},
                        {"grad_norm", r.grad_norm},
                        {"sparsity", r.sparsity},
                        {"invariants", r.report},
                        {"warnings", r.warnings}});
        timing.push_back({{"algorithm", r.algorithm}, {"m", r.size.m}, {"seed", r.seed}, {"wall_time_s", r.wall}});
    }

    // Aggregate by (size, algorithm) in configuration order.
    std::string agg = "algorithm,m,k,s,runs,median_iterations,mean_iterations,mean_sparsity,invariants_pass,"
                      "mean_wall_time_s\n";
    json aggregate = json::array();
    for (const ScadSize& sz : scad_sizes(c))
        for (const auto& alg : algs)
        {
            std::vector<double> its;
            double sp = 0.0, wall = 0.0;
            bool pass = true;
            for (const auto& r : rows)
                if (r.algorithm == alg && r.size.m == sz.m && r.size.k == sz.k)
                {
                    its.push_back(r.iterations);
                    sp += static_cast<double>(r.sparsity);
                    wall += r.wall;
                    pass = pass && r.pass;
                }
            if (its.empty())
                continue;
            const double n = static_cast<double>(its.size());
            double mean = 0.0;
            for (double v : its)
                mean += v;
            mean /= n;
            agg += alg + "," + std::to_string(sz.m) + "," + std::to_string(sz.k) + "," + std::to_string(sz.s) + "," +
                   std::to_string(its.size()) + "," + fmt(median(its)) + "," + fmt(mean) + "," + fmt(sp / n) + "," +
                   (pass ? "1" : "0") + "," + fmt(wall / n) + "\n";
            aggregate.push_back({{"algorithm", alg},
                                 {"m", sz.m},
                                 {"k", sz.k},
                                 {"s", sz.s},
                                 {"runs", its.size()},
                                 {"median_iterations", median(its)},
                                 {"mean_iterations", mean},
                                 {"mean_sparsity", sp / n},
                                 {"invariants_pass", pass}});
        }

    json summary = header_json(c, "scad-bench");
    summary["config"] = c.canonical();
    summary["runs"] = runs;
    summary["aggregate"] = aggregate;
    write_text(dir / "runs.csv", csv);
    write_text(dir / "aggregate.csv", agg);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "timing.json", json{{"runs", timing}}.dump(2) + "\n");
    log << agg;
    return 0;
}

// ---------------------------------------------------------------- gl-segment

struct GlSetup
{
    Image image;
    Labels labels;
    Mask truth;
    GlInstance instance;
};

inline GlSetup gl_setup(const RunConfig& c)
{
    GlSetup g;
    const ProblemBlock& pb = c.problem;
    if (pb.image == "synthetic")
    {
        SyntheticImage syn = synthetic_two_region(pb.width, pb.height, pb.noise, c.seed);
        g.image = std::move(syn.image);
        g.truth = std::move(syn.truth);
    }
    else
    {
        g.image = read_image(pb.image);
        if (!pb.truth.empty())
        {
            const Image t = read_image(pb.truth);
            if (t.size() != g.image.size())
                throw ImageError("truth image does not match the input image");
            g.truth.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i)
                g.truth[i] = t.pixels[i] >= 0.5 ? 1 : 0;
        }
    }
    if (!pb.labels.empty())
    {
        const Image l = read_image(pb.labels);
        if (l.size() != g.image.size())
            throw ImageError("label image does not match the input image");
        g.labels = labels_from_image(l);
    }
    else if (!g.truth.empty())
        g.labels = sample_labels(g.truth, pb.label_fraction, c.seed + 1);
    else
        throw ConfigError("problem.labels is required when no ground truth is available");

    GlOptions opt;
    opt.epsilon = pb.epsilon;
    opt.eta = pb.eta;
    opt.proximity_radius = pb.radius;
    opt.patch_radius = pb.patch;
    opt.sigma2 = pb.sigma2;
    g.instance = make_gl_instance(g.image, g.labels, opt, g.truth);
    return g;
}

inline int cmd_gl_segment(const RunConfig& c, std::ostream& log = std::cout)
{
    c.validate();
    if (!c.is_gl())
        throw ConfigError("gl-segment needs problem.type = gl");
    const auto dir = prepare_dir(c.output.dir);
    const GlSetup g = gl_setup(c);
    const Problem p = gl_problem(g.instance, c.problem.box);
    const Vector u0 = gl_initial_point(g.instance);
    const bool has_truth = !g.truth.empty();
    auto dice_of = [&](const Vector& u) { return dice(threshold_seg(u), g.truth); };

    std::string csv = "algorithm,criterion,iterations,stop_reason,dice,energy,grad_norm,invariants_pass,wall_time_s\n";
    json runs = json::array();
    json timing = json::array();
    for (const auto& alg : c.algorithms())
    {
        Vector last;
        for (const Criterion& cr : c.criteria())
        {
            StopCriteria stop;
            stop.rel_increment_tol = 0.0;
            stop.max_iters = c.max_iters();
            if (cr.kind == "grad")
                stop.grad_norm_tol = cr.threshold;
            else if (cr.kind == "inc")
                stop.increment_tol = cr.threshold;
            else
            {
                if (!has_truth)
                {
                    log << "skipping " << cr.label() << ": no ground truth\n";
                    continue;
                }
                stop.dice_bound = cr.threshold;
                stop.dice_fn = dice_of;
            }
            const SolveResult r = run_algorithm(p, c, alg, u0, stop);
            const double d = has_truth ? dice_of(r.u_final) : std::nan("");
            csv += alg + "," + cr.label() + "," + std::to_string(r.iterations) + "," + to_string(r.stop_reason) +
                   "," + fmt(d) + "," + fmt(final_energy(p, r)) + "," + fmt(stationarity(p, r.u_final)) + "," +
                   (r.report.all_pass() ? "1" : "0") + "," + fmt(r.wall_time) + "\n";
            runs.push_back({{"algorithm", alg},
                            {"criterion", cr.label()},
                            {"iterations", r.iterations},
                            {"stop_reason", to_string(r.stop_reason)},
                            {"dice", has_truth ? json(d) : json()},
                            {"energy", final_energy(p, r)},
                            {"grad_norm", stationarity(p, r.u_final)},
                            {"invariants", report_json(r.report)},
                            {"warnings", r.warnings}});
            timing.push_back({{"algorithm", alg}, {"criterion", cr.label()}, {"wall_time_s", r.wall_time}});
            log << alg << " " << cr.label() << " iters=" << r.iterations << " stop=" << to_string(r.stop_reason);
            if (has_truth)
                log << " dice=" << fmt(d);
            log << "\n";
            last = r.u_final;
        }
        if (c.output.mask && last.size() > 0)
            write_mask_pgm((dir / ("mask_" + alg + ".pgm")).string(), threshold_seg(last), g.image.width,
                           g.image.height);
    }
    json summary = header_json(c, "gl-segment");
    summary["config"] = c.canonical();
    summary["instance"] = {{"width", g.image.width},
                           {"height", g.image.height},
                           {"sigma2", g.instance.sigma2},
                           {"lipschitz", p.lipschitz_L},
                           {"labeled", static_cast<long>(g.instance.lambda.sum())}};
    summary["runs"] = runs;
    write_text(dir / "segment.csv", csv);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "timing.json", json{{"runs", timing}}.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------- solve

inline int cmd_solve(const RunConfig& c, std::ostream& log = std::cout)
{
    c.validate();
    const auto dir = prepare_dir(c.output.dir);
    const std::string alg = c.algorithms().front();
    Problem p;
    Vector u0;
    Mask truth;
    if (c.is_gl())
    {
        const GlSetup g = gl_setup(c);
        p = gl_problem(g.instance, c.problem.box);
        u0 = gl_initial_point(g.instance);
        truth = g.truth;
    }
    else
    {
        const ScadSize sz = scad_sizes(c).front();
        const ScadInstance inst =
            gen_scad(sz.m, sz.k, sz.s, c.seed, c.problem.mu, c.problem.theta, c.problem.huber_alpha);
        p = scad_problem(inst);
        u0 = Vector::Zero(sz.k);
    }
    StopCriteria stop = stop_criteria(c);
    if (stop.dice_bound && !truth.empty())
        stop.dice_fn = [&](const Vector& u) { return dice(threshold_seg(u), truth); };
    const SolveResult r = run_algorithm(p, c, alg, u0, stop, true);
    const RateFit fit = rate_fit_iterates(r.iterates);

    json summary = header_json(c, "solve");
    summary["config"] = c.canonical();
    summary["algorithm"] = alg;
    summary["iterations"] = r.iterations;
    summary["stop_reason"] = to_string(r.stop_reason);
    summary["energy"] = final_energy(p, r);
    summary["grad_norm"] = stationarity(p, r.u_final);
    summary["rate"] = {{"class", to_string(fit.kind)},
                       {"eta", fit.eta},
                       {"exponent", fit.exponent},
                       {"r2_linear", fit.r2_linear},
                       {"r2_loglog", fit.r2_loglog}};
    summary["invariants"] = report_json(r.report);
    summary["warnings"] = r.warnings;
    if (!truth.empty())
        summary["dice"] = dice(threshold_seg(r.u_final), truth);
    write_text(dir / "trace.csv", trace_csv(r));
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "timing.json", json{{"wall_time_s", r.wall_time}}.dump(2) + "\n");
    log << alg << " iters=" << r.iterations << " stop=" << to_string(r.stop_reason)
        << " E=" << fmt(final_energy(p, r)) << " rate=" << to_string(fit.kind) << "\n";
    return 0;
}

// ----------------------------------------------------------------------- diag

struct GradientCheck
{
    std::string name;
    int points = 0;
    double max_rel_error = 0.0;
};

/// Worst relative error of ∇E, ∇Eⁿ, ∇Hⁿ, ∇Fⁿ against central differences at
/// `points` probes; `draw` returns a fresh probe and history (uⁿ, uⁿ⁻¹).
inline GradientCheck gradient_check(const std::string& name, const Problem& p, int points, double dt,
                                    const std::function<std::pair<Vector, Vector>(int)>& draw)
{
    GradientCheck out{name, points, 0.0};
    for (int i = 0; i < points; ++i)
    {
        auto [u, hist] = draw(i);
        const SurrogateState s{hist, Vector(hist - 0.5 * (u - hist)), dt};
        const SurrogateEnergy en(p, s);
        const double h = fd_step(u);
        auto worst = [&](const ScalarFn& fn, const Vector& g) {
            out.max_rel_error = std::max(out.max_rel_error, relative_error(fd_gradient_oracle(fn, u, h), g));
        };
        worst([&](const Vector& v) { return energy_E(p, v); }, grad_E(p, u));
        worst([&](const Vector& v) { return en.En(v); }, en.grad_En(u));
        worst([&](const Vector& v) { return en.Hn(v); }, en.grad_Hn(u));
        worst([&](const Vector& v) { return en.Fn(v); }, en.grad_Fn(u));
    }
    return out;
}

inline std::vector<GradientCheck> standard_gradient_checks(std::uint64_t seed, int points = 20)
{
    std::vector<GradientCheck> out;
    {
        const ScadInstance inst = gen_scad(30, 60, 5, seed);
        const Problem p = scad_problem(inst);
        const std::vector<double> bps{inst.huber_alpha, inst.mu, inst.theta * inst.mu};
        std::mt19937_64 gen(seed + 11);
        std::uniform_real_distribution<double> coord(-0.01, 0.01);
        auto draw = [&](int) {
            auto next = [&] { return coord(gen); };
            Vector u(60), hist(60);
            for (Index i = 0; i < 60; ++i)
            {
                u[i] = next();
                hist[i] = next();
            }
            return std::make_pair(resample_away_from_breakpoints(u, bps, next), hist);
        };
        out.push_back(gradient_check("scad", p, points, 1.0, draw));
    }
    {
        const SyntheticImage syn = synthetic_two_region(16, 16, 0.1, seed);
        const GlInstance inst = make_gl_instance(syn.image, sample_labels(syn.truth, 0.1, seed + 1), {}, syn.truth);
        const Problem p = gl_problem(inst);
        std::mt19937_64 gen(seed + 12);
        std::uniform_real_distribution<double> coord(-1.0, 1.0);
        auto draw = [&](int) {
            Vector u(p.dimension), hist(p.dimension);
            for (Index i = 0; i < p.dimension; ++i)
            {
                u[i] = coord(gen);
                hist[i] = coord(gen);
            }
            return std::make_pair(u, hist);
        };
        out.push_back(gradient_check("gl", p, points, 1.0, draw));
    }
    {
        const Problem p = quadratic_cubic(12, seed);
        std::mt19937_64 gen(seed + 13);
        std::uniform_real_distribution<double> coord(-1.0, 1.0);
        auto draw = [&](int) {
            Vector u(12), hist(12);
            for (Index i = 0; i < 12; ++i)
            {
                u[i] = coord(gen);
                hist[i] = coord(gen);
            }
            return std::make_pair(u, hist);
        };
        out.push_back(gradient_check("quadratic_cubic", p, points, 0.5, draw));
    }
    return out;
}

/// Replays a run step by step and audits every step, optionally after
/// corrupting it.
inline InvariantReport audit_run(const Problem& p, const SolverConfig& cfg, const Vector& u0, bool corrupt)
{
    SolverConfig quiet = cfg;
    quiet.monitor = false;
    Stepper st(p, quiet, u0, u0);
    InvariantTracker tracker(cfg.dt, cfg.linesearch ? cfg.linesearch->alpha : 0.0);
    std::function<double(const Vector&)> mnorm;
    if (st.preconditioner() && st.preconditioner()->kind() != PreconditionerKind::exact)
        mnorm = [&st](const Vector& v) { return st.m_norm_sq(v); };
    for (int n = 0; n < cfg.stop.max_iters; ++n)
    {
        const Vector u_nm1 = st.u_nm1();
        const Vector u_n = st.u_n();
        const StepOutcome out = st.step();
        if (out.d_zero)
            break;
        StepData sd{u_nm1, u_n, out.y, out.u_next, out.lambda, cfg.dt, st.lipschitz(),
                    cfg.linesearch ? cfg.linesearch->alpha : 0.0, cfg.anchor};
        if (corrupt)
            sd = corrupt_step(p, sd);
        const StepChecks checks = check_step_invariants(p, sd, mnorm);
        const double lyap_prev = st.lyapunov_value(u_n, u_nm1);
        const double lyap_next = st.lyapunov_value(sd.u_next, u_n);
        tracker.record(n, checks, lyap_prev, lyap_next, (sd.u_next - u_n).squaredNorm(), sd.lambda, st.lipschitz());
        if (check_stop(cfg.stop, out.u_next, u_n, out.record.grad_norm))
            break;
    }
    return tracker.report();
}

/// One corrupted step per monitor; true where the monitor fired.
inline std::map<std::string, bool> negative_controls(std::uint64_t seed)
{
    const Problem p = quadratic_cubic(12, seed);
    SolverConfig cfg;
    cfg.dt = 0.2;
    cfg.anchor = Anchor::t_mode;
    cfg.preconditioner = PreconditionerSpec::sgs();
    cfg.linesearch = LineSearchConfig{};
    cfg.linesearch->lambda_bar_max = 0.5;
    cfg.linesearch->lambda_bar = 0.3;
    cfg.monitor = false;
    const Vector u0 = 0.3 * seeded_probe(12, seed + 1);
    Stepper st(p, cfg, u0, u0);
    st.step();
    const Vector u_nm1 = st.u_nm1();
    const Vector u_n = st.u_n();
    const StepOutcome out = st.step();
    StepData sd{u_nm1, u_n, out.y, out.u_next, out.lambda, cfg.dt, st.lipschitz(), cfg.linesearch->alpha,
                cfg.anchor};
    auto mnorm = [&st](const Vector& v) { return st.m_norm_sq(v); };

    std::map<std::string, bool> fired;
    const StepChecks bad = check_step_invariants(p, corrupt_step(p, sd), mnorm);
    fired[invariant_name(inv_descent_i)] = !bad.ok(inv_descent_i);
    fired[invariant_name(inv_descent_ii)] = !bad.ok(inv_descent_ii);

    StepData up = sd;
    up.lambda = std::max(up.lambda, 1.0);
    const SurrogateEnergy en(p, SurrogateState{sd.u_n, sd.u_nm1, sd.dt});
    up.u_next = up.y + 10.0 * (sd.y - sd.u_n).norm() * en.grad_En(sd.y).normalized();
    fired[invariant_name(inv_armijo_certificate)] = !check_step_invariants(p, up, mnorm).ok(inv_armijo_certificate);

    const StepChecks clean = check_step_invariants(p, sd, mnorm);
    {
        InvariantTracker t(cfg.dt, cfg.linesearch->alpha);
        const std::uint32_t f = t.record(0, clean, 1.0, 2.0, 0.0, sd.lambda, st.lipschitz());
        fired[invariant_name(inv_lyapunov_decrease)] = (f & invariant_bit(inv_lyapunov_decrease)) != 0;
    }
    {
        InvariantTracker t(cfg.dt, cfg.linesearch->alpha);
        t.record(0, clean, 1.0, 1.0, 1e-6, sd.lambda, st.lipschitz());
        const std::uint32_t f = t.record(1, clean, 1.0, 1.0 - 1e-6, 1e6, sd.lambda, st.lipschitz());
        fired[invariant_name(inv_partial_sum_bound)] = (f & invariant_bit(inv_partial_sum_bound)) != 0;
    }
    return fired;
}

struct OrderSummary
{
    double sgs_slope = 0.0;
    double jacobi_slope = 0.0;
    bool exact_zero = false;
};

inline OrderSummary standard_order_check(std::uint64_t seed)
{
    const Problem p = quadratic_cubic(20, seed);
    const Vector u0 = 0.5 * seeded_probe(20, seed + 2);
    const std::vector<double> dts{0.02, 0.01, 0.005, 0.0025};
    OrderSummary o;
    o.sgs_slope = order_diagnostic(p, PreconditionerSpec::sgs(), dts, 0.4, u0).slope;
    o.jacobi_slope = order_diagnostic(p, PreconditionerSpec::jacobi(), dts, 0.4, u0).slope;
    o.exact_zero = order_diagnostic(p, PreconditionerSpec::exact(), dts, 0.4, u0).identically_zero;
    return o;
}

inline int cmd_diag(const RunConfig& c, std::ostream& log = std::cout)
{
    const auto dir = prepare_dir(c.output.dir);
    json out = header_json(c, "diag");
    out["config"] = c.canonical();
    bool ok = true;
    std::vector<std::string> failures;

    // Reference runs audited step by step.
    json audits = json::array();
    struct Case
    {
        std::string name;
        Problem p;
        SolverConfig cfg;
        Vector u0;
    };
    std::vector<Case> cases;
    {
        SolverConfig s;
        s.dt = 1.0;
        s.preconditioner = PreconditionerSpec::exact();
        s.stop.max_iters = 200;
        cases.push_back({"scalar_quadratic", scalar_quadratic(), s, Vector::Ones(1)});
    }
    for (Anchor a : {Anchor::n_mode, Anchor::t_mode})
    {
        SolverConfig s;
        s.dt = 0.2;
        s.anchor = a;
        s.preconditioner = PreconditionerSpec::sgs();
        s.linesearch = LineSearchConfig{};
        s.linesearch->lambda_bar_max = 0.5;
        s.linesearch->lambda_bar = 0.3;
        s.stop.max_iters = 300;
        cases.push_back({std::string("quadratic_cubic_sgs_ls_") + to_string(a), quadratic_cubic(12, c.seed), s,
                         Vector(0.3 * seeded_probe(12, c.seed + 1))});
    }
    for (const Case& k : cases)
    {
        const InvariantReport r = audit_run(k.p, k.cfg, k.u0, c.diag.corrupt);
        audits.push_back({{"name", k.name}, {"invariants", report_json(r)}});
        for (const auto& f : r.failing())
        {
            ok = false;
            failures.push_back(k.name + ": " + f);
        }
    }
    out["audits"] = audits;

    {
        SolverConfig s;
        s.dt = 1.0;
        s.preconditioner = PreconditionerSpec::exact();
        s.stop.rel_increment_tol = 0.0;
        s.stop.max_iters = 40;
        s.keep_iterates = true;
        const SolveResult r = run(scalar_quadratic(), s, Vector::Ones(1));
        const RateFit fit = rate_fit_iterates(r.iterates);
        out["rate_scalar_quadratic"] = {{"class", to_string(fit.kind)}, {"eta", fit.eta}};
        if (fit.kind != RateClass::linear)
        {
            ok = false;
            failures.push_back("rate_fit: scalar quadratic not classified linear");
        }
    }

    json controls = json::object();
    for (const auto& [name, fired] : negative_controls(c.seed))
    {
        controls[name] = fired;
        if (!fired)
        {
            ok = false;
            failures.push_back("negative control did not fire: " + name);
        }
    }
    out["negative_controls"] = controls;

    if (c.diag.order)
    {
        const OrderSummary o = standard_order_check(c.seed);
        out["order"] = {{"sgs_slope", o.sgs_slope}, {"jacobi_slope", o.jacobi_slope}, {"exact_zero", o.exact_zero}};
        if (o.sgs_slope < 1.8 || !o.exact_zero)
        {
            ok = false;
            failures.push_back("order diagnostic: SGS slope " + fmt(o.sgs_slope));
        }
    }
    if (c.diag.gradients)
    {
        json g = json::array();
        for (const auto& chk : standard_gradient_checks(c.seed))
        {
            g.push_back({{"problem", chk.name}, {"points", chk.points}, {"max_rel_error", chk.max_rel_error}});
            if (!(chk.max_rel_error <= 1e-6))
            {
                ok = false;
                failures.push_back("gradient check: " + chk.name);
            }
        }
        out["gradients"] = g;
    }
    out["failures"] = failures;
    out["pass"] = ok;
    write_text(dir / "diag.json", out.dump(2) + "\n");
    for (const auto& f : failures)
        log << "FAIL " << f << "\n";
    log << (ok ? "diag: all checks passed" : "diag: failures detected") << "\n";
    return ok ? 0 : 1;
}

} // namespace dcsplit::cli

#endif
