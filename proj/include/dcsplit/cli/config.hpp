#ifndef DCSPLIT_CLI_CONFIG_HPP
#define DCSPLIT_CLI_CONFIG_HPP

// INI run configuration: [problem], [solver], [output], [diag] and a
// top-level seed. Unknown sections or keys are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcsplit::cli {

class ConfigError : public std::runtime_error
{
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline const std::vector<std::string>& algorithm_roster()
{
    static const std::vector<std::string> names{"bapdca-n", "bapdca-t", "bapdca-ls-n", "bapdca-ls-t", "badca",
                                                "badca-ls", "dca",      "bdca",        "pdcae"};
    return names;
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',')
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
    {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

/// Shortest round-trip text for a double.
inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    for (int prec = 1; prec < 17; ++prec)
    {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            return buf;
    }
    return s;
}

/// One stop rule of the segmentation protocol.
struct Criterion
{
    /// grad | inc | dice
    std::string kind;
    double threshold = 0.0;

    std::string label() const { return kind + ":" + fmt(threshold); }
};

inline std::vector<Criterion> parse_criteria(const std::string& s)
{
    std::vector<Criterion> out;
    for (const auto& item : split_list(s))
    {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("criterion '" + item + "' must read kind:threshold");
        Criterion c{trim(item.substr(0, colon)), 0.0};
        if (c.kind != "grad" && c.kind != "inc" && c.kind != "dice")
            throw ConfigError("unknown criterion kind '" + c.kind + "' (grad, inc, dice)");
        try
        {
            c.threshold = std::stod(item.substr(colon + 1));
        }
        catch (const std::exception&)
        {
            throw ConfigError("criterion '" + item + "' has a malformed threshold");
        }
        if (!(c.threshold > 0.0))
            throw ConfigError("criterion '" + item + "' needs a positive threshold");
        out.push_back(c);
    }
    return out;
}

struct ProblemBlock
{
    std::string type = "scad";

    // scad
    double scale = 0.25;
    std::vector<int> sizes{1};
    int seeds = 5;
    long m = 0, k = 0, s = 0;
    double mu = 5e-4;
    double theta = 10.0;
    /// ≤ 0 selects 0.5μ.
    double huber_alpha = 0.0;
    bool l1_reference = true;
    /// ≤ 0 selects the Huber threshold α for smooth runs and 1e-6 for the ℓ₁ run.
    double sparsity_tol = 0.0;

    // gl
    std::string image = "synthetic";
    std::string labels;
    std::string truth;
    int width = 64;
    int height = 64;
    double noise = 0.1;
    double label_fraction = 0.05;
    double epsilon = 10.0;
    double eta = 10.0;
    int radius = 3;
    int patch = 1;
    double sigma2 = 0.0;
    double box = 1.1;
};

struct SolverBlock
{
    std::vector<std::string> algorithms;
    /// ≤ 0 selects the problem default.
    double dt = 0.0;
    /// auto | exact | jacobi | sgs | richardson
    std::string preconditioner = "auto";
    int sweeps = 0;
    std::optional<double> c_tilde;
    std::optional<double> lambda_shift;
    double cg_tol = 1e-12;
    double alpha = 0.2;
    double beta = 0.8;
    double lambda_bar_max = 0.0;
    double lambda_bar = 0.0;
    bool quad_init = true;
    int max_backtracks = 50;
    bool strict = false;
    double rel_increment_tol = 1e-12;
    std::optional<double> grad_tol;
    std::optional<double> increment_tol;
    std::optional<double> dice_bound;
    int max_iters = 0;
    std::vector<Criterion> criteria;
    int restart_period = 200;
};

struct OutputBlock
{
    std::string dir = "out";
    bool trace = false;
    bool mask = true;
};

struct DiagBlock
{
    /// Audits the reference run on corrupted steps (negative control).
    bool corrupt = false;
    bool order = true;
    bool gradients = true;
};

struct RunConfig
{
    std::uint64_t seed = 1;
    ProblemBlock problem;
    SolverBlock solver;
    OutputBlock output;
    DiagBlock diag;

    bool is_gl() const { return problem.type == "gl"; }

    double dt() const
    {
        if (solver.dt > 0.0)
            return solver.dt;
        return is_gl() ? 1.0 : 6.0 - 1e-15;
    }
    double lambda_bar_max() const
    {
        if (solver.lambda_bar_max > 0.0)
            return solver.lambda_bar_max;
        return is_gl() ? 1.0 : 5.0;
    }
    double lambda_bar() const { return solver.lambda_bar > 0.0 ? solver.lambda_bar : 0.618 * lambda_bar_max(); }
    std::string preconditioner() const
    {
        if (solver.preconditioner != "auto")
            return solver.preconditioner;
        return is_gl() ? "jacobi" : "richardson";
    }
    int sweeps() const
    {
        if (solver.sweeps > 0)
            return solver.sweeps;
        return is_gl() ? 50 : 1;
    }
    int max_iters() const
    {
        if (solver.max_iters > 0)
            return solver.max_iters;
        return is_gl() ? 1000 : 20000;
    }
    std::vector<std::string> algorithms() const
    {
        if (!solver.algorithms.empty())
            return solver.algorithms;
        if (is_gl())
            return {"bapdca-n", "bapdca-t", "bapdca-ls-n", "bapdca-ls-t", "badca", "badca-ls",
                    "dca",      "bdca",     "pdcae"};
        return {"dca", "bdca", "bapdca-n", "bapdca-t", "bapdca-ls-n", "bapdca-ls-t"};
    }
    std::vector<Criterion> criteria() const
    {
        if (!solver.criteria.empty())
            return solver.criteria;
        return parse_criteria("grad:1e-1, grad:1e-3, grad:1e-5, inc:1e-1, inc:1e-3, inc:1e-5, dice:0.993");
    }

    /// Effective settings, one sorted `section.key = value` line each.
    std::string canonical() const
    {
        std::map<std::string, std::string> kv;
        kv["seed"] = std::to_string(seed);
        const ProblemBlock& p = problem;
        kv["problem.type"] = p.type;
        if (is_gl())
        {
            kv["problem.image"] = p.image;
            kv["problem.labels"] = p.labels;
            kv["problem.truth"] = p.truth;
            kv["problem.width"] = std::to_string(p.width);
            kv["problem.height"] = std::to_string(p.height);
            kv["problem.noise"] = fmt(p.noise);
            kv["problem.label_fraction"] = fmt(p.label_fraction);
            kv["problem.epsilon"] = fmt(p.epsilon);
            kv["problem.eta"] = fmt(p.eta);
            kv["problem.radius"] = std::to_string(p.radius);
            kv["problem.patch"] = std::to_string(p.patch);
            kv["problem.sigma2"] = fmt(p.sigma2);
            kv["problem.box"] = fmt(p.box);
            std::string crit;
            for (const auto& c : criteria())
                crit += (crit.empty() ? "" : ",") + c.label();
            kv["solver.criteria"] = crit;
        }
        else
        {
            kv["problem.scale"] = fmt(p.scale);
            std::string sz;
            for (int i : p.sizes)
                sz += (sz.empty() ? "" : ",") + std::to_string(i);
            kv["problem.sizes"] = sz;
            kv["problem.seeds"] = std::to_string(p.seeds);
            kv["problem.m"] = std::to_string(p.m);
            kv["problem.k"] = std::to_string(p.k);
            kv["problem.s"] = std::to_string(p.s);
            kv["problem.mu"] = fmt(p.mu);
            kv["problem.theta"] = fmt(p.theta);
            kv["problem.huber_alpha"] = fmt(p.huber_alpha);
            kv["problem.l1_reference"] = p.l1_reference ? "true" : "false";
            kv["problem.sparsity_tol"] = fmt(p.sparsity_tol);
            kv["solver.rel_increment_tol"] = fmt(solver.rel_increment_tol);
        }
        std::string algs;
        for (const auto& a : algorithms())
            algs += (algs.empty() ? "" : ",") + a;
        kv["solver.algorithms"] = algs;
        kv["solver.dt"] = fmt(dt());
        kv["solver.preconditioner"] = preconditioner();
        kv["solver.sweeps"] = std::to_string(sweeps());
        kv["solver.c_tilde"] = solver.c_tilde ? fmt(*solver.c_tilde) : "auto";
        kv["solver.lambda_shift"] = solver.lambda_shift ? fmt(*solver.lambda_shift) : "auto";
        kv["solver.cg_tol"] = fmt(solver.cg_tol);
        kv["solver.alpha"] = fmt(solver.alpha);
        kv["solver.beta"] = fmt(solver.beta);
        kv["solver.lambda_bar_max"] = fmt(lambda_bar_max());
        kv["solver.lambda_bar"] = fmt(lambda_bar());
        kv["solver.quad_init"] = solver.quad_init ? "true" : "false";
        kv["solver.max_backtracks"] = std::to_string(solver.max_backtracks);
        kv["solver.strict"] = solver.strict ? "true" : "false";
        kv["solver.grad_tol"] = solver.grad_tol ? fmt(*solver.grad_tol) : "off";
        kv["solver.increment_tol"] = solver.increment_tol ? fmt(*solver.increment_tol) : "off";
        kv["solver.dice_bound"] = solver.dice_bound ? fmt(*solver.dice_bound) : "off";
        kv["solver.max_iters"] = std::to_string(max_iters());
        kv["solver.restart_period"] = std::to_string(solver.restart_period);
        kv["diag.corrupt"] = diag.corrupt ? "true" : "false";
        kv["diag.order"] = diag.order ? "true" : "false";
        kv["diag.gradients"] = diag.gradients ? "true" : "false";
        std::string out;
        for (const auto& [k, v] : kv)
            out += k + " = " + v + "\n";
        return out;
    }

    void validate() const
    {
        if (problem.type != "scad" && problem.type != "gl")
            throw ConfigError("problem.type must be scad or gl");
        for (const auto& a : algorithms())
            if (std::find(algorithm_roster().begin(), algorithm_roster().end(), a) == algorithm_roster().end())
                throw ConfigError("unknown algorithm '" + a + "'");
        const std::string pc = preconditioner();
        if (pc != "exact" && pc != "jacobi" && pc != "sgs" && pc != "richardson")
            throw ConfigError("unknown preconditioner '" + pc + "'");
        if (problem.seeds < 1)
            throw ConfigError("problem.seeds must be >= 1");
        if (!(problem.scale > 0.0))
            throw ConfigError("problem.scale must be positive");
        if (problem.sizes.empty())
            throw ConfigError("problem.sizes must not be empty");
        for (int i : problem.sizes)
            if (i < 1)
                throw ConfigError("problem.sizes entries must be >= 1");
        if (!(problem.label_fraction > 0.0 && problem.label_fraction <= 1.0))
            throw ConfigError("problem.label_fraction must lie in (0, 1]");
        if (problem.width < 2 || problem.height < 2)
            throw ConfigError("problem.width and problem.height must be >= 2");
        if (!(problem.epsilon > 0.0 && problem.eta > 0.0))
            throw ConfigError("problem.epsilon and problem.eta must be positive");
        if (max_iters() < 1)
            throw ConfigError("solver.max_iters must be >= 1");
    }
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s)
    {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v)
{
    try
    {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    }
    catch (const std::exception&)
    {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline long parse_long(const std::string& key, const std::string& v)
{
    try
    {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    }
    catch (const std::exception&)
    {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

} // namespace detail

/// Applies one `section.key = value` assignment.
inline void apply_setting(RunConfig& c, const std::string& section, const std::string& key, const std::string& raw)
{
    using namespace detail;
    const std::string v = trim(raw);
    const std::string full = section.empty() ? key : section + "." + key;
    auto num = [&] { return parse_double(full, v); };
    auto integer = [&] { return static_cast<int>(parse_long(full, v)); };
    auto boolean = [&] { return parse_bool(full, v); };
    auto optnum = [&]() -> std::optional<double> {
        if (v == "off" || v == "auto" || v.empty())
            return std::nullopt;
        return num();
    };

    ProblemBlock& p = c.problem;
    SolverBlock& s = c.solver;
    if (section.empty() && key == "seed")
        c.seed = static_cast<std::uint64_t>(parse_long(full, v));
    else if (section == "problem")
    {
        if (key == "type")
            p.type = v;
        else if (key == "scale")
            p.scale = num();
        else if (key == "sizes")
        {
            p.sizes.clear();
            for (const auto& x : split_list(v))
                p.sizes.push_back(static_cast<int>(parse_long(full, x)));
        }
        else if (key == "seeds")
            p.seeds = integer();
        else if (key == "m")
            p.m = parse_long(full, v);
        else if (key == "k")
            p.k = parse_long(full, v);
        else if (key == "s")
            p.s = parse_long(full, v);
        else if (key == "mu")
            p.mu = num();
        else if (key == "theta")
            p.theta = num();
        else if (key == "huber_alpha")
            p.huber_alpha = num();
        else if (key == "l1_reference")
            p.l1_reference = boolean();
        else if (key == "sparsity_tol")
            p.sparsity_tol = num();
        else if (key == "image")
            p.image = v;
        else if (key == "labels")
            p.labels = v;
        else if (key == "truth")
            p.truth = v;
        else if (key == "width")
            p.width = integer();
        else if (key == "height")
            p.height = integer();
        else if (key == "noise")
            p.noise = num();
        else if (key == "label_fraction")
            p.label_fraction = num();
        else if (key == "epsilon")
            p.epsilon = num();
        else if (key == "eta")
            p.eta = num();
        else if (key == "radius")
            p.radius = integer();
        else if (key == "patch")
            p.patch = integer();
        else if (key == "sigma2")
            p.sigma2 = num();
        else if (key == "box")
            p.box = num();
        else
            throw ConfigError("unknown key '" + full + "'");
    }
    else if (section == "solver")
    {
        if (key == "algorithms" || key == "algorithm")
            s.algorithms = split_list(v);
        else if (key == "dt")
            s.dt = num();
        else if (key == "preconditioner")
            s.preconditioner = v;
        else if (key == "sweeps")
            s.sweeps = integer();
        else if (key == "c_tilde")
            s.c_tilde = optnum();
        else if (key == "lambda_shift")
            s.lambda_shift = optnum();
        else if (key == "cg_tol")
            s.cg_tol = num();
        else if (key == "alpha")
            s.alpha = num();
        else if (key == "beta")
            s.beta = num();
        else if (key == "lambda_bar_max")
            s.lambda_bar_max = num();
        else if (key == "lambda_bar")
            s.lambda_bar = num();
        else if (key == "quad_init")
            s.quad_init = boolean();
        else if (key == "max_backtracks")
            s.max_backtracks = integer();
        else if (key == "bound_mode")
        {
            if (v != "strict_theory" && v != "experiment")
                throw ConfigError("solver.bound_mode must be strict_theory or experiment");
            s.strict = v == "strict_theory";
        }
        else if (key == "rel_increment_tol")
            s.rel_increment_tol = num();
        else if (key == "grad_tol")
            s.grad_tol = optnum();
        else if (key == "increment_tol")
            s.increment_tol = optnum();
        else if (key == "dice_bound")
            s.dice_bound = optnum();
        else if (key == "max_iters")
            s.max_iters = integer();
        else if (key == "criteria")
            s.criteria = parse_criteria(v);
        else if (key == "restart_period")
            s.restart_period = integer();
        else
            throw ConfigError("unknown key '" + full + "'");
    }
    else if (section == "output")
    {
        if (key == "dir")
            c.output.dir = v;
        else if (key == "trace")
            c.output.trace = boolean();
        else if (key == "mask")
            c.output.mask = boolean();
        else
            throw ConfigError("unknown key '" + full + "'");
    }
    else if (section == "diag")
    {
        if (key == "corrupt")
            c.diag.corrupt = boolean();
        else if (key == "order")
            c.diag.order = boolean();
        else if (key == "gradients")
            c.diag.gradients = boolean();
        else
            throw ConfigError("unknown key '" + full + "'");
    }
    else if (section.empty())
    {
        // An empty [section] header parses as a bare key.
        if (key != "problem" && key != "solver" && key != "output" && key != "diag")
            throw ConfigError("unknown key '" + key + "'");
    }
    else
        throw ConfigError("unknown section '" + section + "'");
}

inline RunConfig parse_config(std::istream& in)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try
    {
        pt::ini_parser::read_ini(in, tree);
    }
    catch (const pt::ini_parser_error& e)
    {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    for (const auto& [name, node] : tree)
    {
        if (node.empty())
            apply_setting(c, "", name, node.data());
        else
            for (const auto& [key, leaf] : node)
                apply_setting(c, name, key, leaf.data());
    }
    return c;
}

inline RunConfig parse_config_text(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config '" + path + "'");
    return parse_config(in);
}

} // namespace dcsplit::cli

#endif
