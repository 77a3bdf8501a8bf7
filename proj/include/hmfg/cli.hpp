#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hmfg/ccgeom.hpp"
#include "hmfg/config.hpp"
#include "hmfg/games.hpp"

namespace hmfg::cli {

using json = nlohmann::json;
using config::ConfigError;

inline constexpr const char* kVersion = "1.0.0";

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> t{"solve-mfg", "solve-hjb", "solve-fp", "ccdist",
                                            "ergodic-diagnostics", "nplayer", "simulate", "verify"};
    return t;
}

/// 64-bit FNV-1a, used for input and artifact fingerprints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Seed of the named random substream derived from the run seed.
inline std::uint64_t substream_seed(std::uint64_t seed, const std::string& name) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return (z ^ (z >> 31)) ^ fnv1a(name);
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string task;
    std::uint64_t seed = 0;
    std::string out;

    std::string family = "euclidean";
    int dim = 1;
    int n = 32;
    std::string scheme = "monotone";

    std::string model = "quadratic";
    double radius = 1.0;
    std::string potential = "none";
    double amplitude = 1.0;

    std::string coupling = "smoothed-local";
    double sigma = 0.15;
    std::string G = "arctan";
    double strength = 1.0;
    double constant = 0.0;

    bool ergodic = true;
    double rho = 1.0;
    double rho0 = 0.5;
    int min_steps = 13;
    int max_steps = 40;
    double theta = 0.5;
    double tol = 1e-8;
    double ergodic_tol = 1e-6;
    double hjb_tol = 1e-9;
    int max_iter = 500;

    std::string drift = "zero";  ///< solve-fp and ergodic-diagnostics: "zero" or "hjb"

    std::vector<double> source;  ///< ccdist base point
    int directions = 16;
    double cutoff = std::numeric_limits<double>::infinity();
    std::vector<double> radii{0.08, 0.1, 0.125, 0.15, 0.2, 0.25};
    double max_sep = 0.1;
    double min_sep = -1.0;
    int axis = -1;
    int k_max = 0;  ///< 0: family default

    int n_max = 20;

    int players = 2;
    long budget = 100000;
    std::string quadrature = "auto";
    bool verify_player = false;

    double T = 20.0;
    double dt = 0.0;  ///< 0: h / 4
    long paths = 1000;
    double allowance_constant = 1.0;
    double max_se = 0.05;

    /// Every field with defaults filled in; the input hash is taken over it.
    json normalized() const {
        json j;
        j["task"] = task;
        j["seed"] = seed;
        j["family"] = {{"name", family}, {"dim", dim}};
        j["grid"] = {{"n", n}, {"scheme", scheme}};
        j["model"] = {{"kind", model}, {"radius", radius}, {"potential", potential}, {"amplitude", amplitude}};
        j["coupling"] = {{"kind", coupling}, {"sigma", sigma}, {"G", G}, {"strength", strength}, {"constant", constant}};
        j["solver"] = {{"ergodic", ergodic}, {"rho", rho},       {"rho0", rho0},         {"min_steps", min_steps},
                       {"max_steps", max_steps}, {"theta", theta}, {"tol", tol},         {"ergodic_tol", ergodic_tol},
                       {"hjb_tol", hjb_tol},   {"max_iter", max_iter}};
        j["fp"] = {{"drift", drift}};
        j["ccdist"] = {{"source", source}, {"directions", directions}, {"cutoff", std::isinf(cutoff) ? -1.0 : cutoff},
                       {"radii", radii},   {"max_sep", max_sep},       {"min_sep", min_sep},
                       {"axis", axis},     {"k_max", k_max}};
        j["diagnostics"] = {{"n_max", n_max}};
        j["game"] = {{"N", players}, {"budget", budget}, {"quadrature", quadrature}, {"verify", verify_player}};
        j["simulation"] = {{"T", T}, {"dt", dt}, {"paths", paths}};
        j["verify"] = {{"allowance_constant", allowance_constant}, {"max_se", max_se}};
        return j;
    }
};

namespace detail {

inline std::string show(const json& v) { return v.dump(); }
inline std::string show(double v) { return json(v).dump(); }

/// Typed access to one section with field-level error messages and
/// rejection of unknown keys.
class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) return;
        if (!root.at(name).is_object()) throw ConfigError(name + ": must be a section");
        j_ = root.at(name);
    }

    double number(const std::string& key, double def) {
        if (!take(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number()) fail(key, "must be a number (got " + show(v) + ")");
        return v.get<double>();
    }
    double positive(const std::string& key, double def) {
        const double v = number(key, def);
        if (!(v > 0.0) || !std::isfinite(v)) fail(key, "must be positive (got " + show(v) + ")");
        return v;
    }
    long long integer(const std::string& key, long long def, long long lo, long long hi) {
        if (!take(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "must be an integer (got " + show(v) + ")");
        const long long x = v.get<long long>();
        if (x < lo || x > hi) fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] (got " + std::to_string(x) + ")");
        return x;
    }
    std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
        if (!take(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_string()) fail(key, "must be a string (got " + show(v) + ")");
        const std::string s = v.get<std::string>();
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(key, "unknown value '" + s + "' (expected one of: " + list + ")");
        }
        return s;
    }
    std::string text(const std::string& key, const std::string& def) {
        if (!take(key)) return def;
        if (!j_.at(key).is_string()) fail(key, "must be a string");
        return j_.at(key).get<std::string>();
    }
    bool boolean(const std::string& key, bool def) {
        if (!take(key)) return def;
        if (!j_.at(key).is_boolean()) fail(key, "must be true or false");
        return j_.at(key).get<bool>();
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!take(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_array()) fail(key, "must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(key, "must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError((name_.empty() ? "" : name_ + ".") + key + ": " + msg);
    }
    void finish() const {
        if (!j_.is_object()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(it.key(), "unknown key");
    }

private:
    bool take(const std::string& key) {
        used_.insert(key);
        return j_.is_object() && j_.contains(key);
    }
    std::string name_;
    json j_;
    std::set<std::string> used_;
};

}  // namespace detail

/// Validate a parsed configuration. Every problem is reported with the
/// dotted field name; nothing is computed here.
inline RunConfig from_json(const json& root) {
    if (!root.is_object()) throw ConfigError("config: top level must be a table");
    static const std::set<std::string> sections{"task",   "seed", "out",         "family", "grid",       "model",
                                                "coupling", "solver", "fp",       "ccdist", "diagnostics", "game",
                                                "simulation", "verify"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!sections.count(it.key())) throw ConfigError(it.key() + ": unknown section or key");

    RunConfig c;
    {
        json top = json::object();
        for (const char* k : {"task", "seed", "out"})
            if (root.contains(k)) top[k] = root.at(k);
        detail::Section s(json{{"", top}}, "");
        if (!top.contains("task")) throw ConfigError("task: required (one of solve-mfg, solve-hjb, solve-fp, ccdist, ergodic-diagnostics, nplayer, simulate, verify)");
        c.task = s.choice("task", "", task_names());
        c.seed = static_cast<std::uint64_t>(s.integer("seed", 0, 0, std::numeric_limits<long long>::max()));
        c.out = s.text("out", "");
    }
    {
        detail::Section s(root, "family");
        c.family = s.choice("name", c.family, {"euclidean", "grushin", "heisenberg_periodic"});
        c.dim = static_cast<int>(s.integer("dim", c.family == "euclidean" ? 1 : (c.family == "grushin" ? 2 : 3), 1, kMaxDim));
        if (c.family == "grushin" && c.dim != 2) s.fail("dim", "grushin lives on T^2");
        if (c.family == "heisenberg_periodic" && c.dim != 3) s.fail("dim", "heisenberg_periodic lives on T^3");
        s.finish();
    }
    {
        detail::Section s(root, "grid");
        c.n = static_cast<int>(s.integer("n", c.n, 4, 4096));
        c.scheme = s.choice("scheme", c.scheme, {"monotone", "centered"});
        s.finish();
    }
    {
        detail::Section s(root, "model");
        c.model = s.choice("kind", c.model, {"quadratic", "linear", "trivial"});
        c.radius = s.positive("radius", c.radius);
        c.potential = s.choice("potential", c.potential, {"none", "cos", "cos-sin"});
        c.amplitude = s.number("amplitude", c.amplitude);
        if (c.potential == "cos-sin" && c.dim < 2) s.fail("potential", "cos-sin needs dimension at least 2");
        s.finish();
    }
    {
        detail::Section s(root, "coupling");
        c.coupling = s.choice("kind", c.coupling, {"smoothed-local", "constant", "linear-convolution"});
        c.sigma = s.number("sigma", c.sigma);
        if (c.coupling != "constant" && !(c.sigma > 0.0 && c.sigma < 0.5)) s.fail("sigma", "must lie in (0, 1/2) (got " + detail::show(c.sigma) + ")");
        c.G = s.choice("G", c.G, {"identity", "arctan", "log1p", "negative"});
        c.strength = s.number("strength", c.strength);
        c.constant = s.number("constant", c.constant);
        s.finish();
    }
    {
        detail::Section s(root, "solver");
        c.ergodic = s.boolean("ergodic", c.ergodic);
        c.rho = s.positive("rho", c.rho);
        c.rho0 = s.positive("rho0", c.rho0);
        c.min_steps = static_cast<int>(s.integer("min_steps", c.min_steps, 2, 60));
        c.max_steps = static_cast<int>(s.integer("max_steps", c.max_steps, 2, 60));
        if (c.max_steps < c.min_steps) s.fail("max_steps", "must be at least min_steps");
        c.theta = s.positive("theta", c.theta);
        if (c.theta > 1.0) s.fail("theta", "must lie in (0, 1]");
        c.tol = s.positive("tol", c.tol);
        c.ergodic_tol = s.positive("ergodic_tol", c.ergodic_tol);
        c.hjb_tol = s.positive("hjb_tol", c.hjb_tol);
        c.max_iter = static_cast<int>(s.integer("max_iter", c.max_iter, 1, 100000));
        s.finish();
    }
    {
        detail::Section s(root, "fp");
        c.drift = s.choice("drift", c.drift, {"zero", "hjb"});
        s.finish();
    }
    {
        detail::Section s(root, "ccdist");
        c.source = s.numbers("source", std::vector<double>(static_cast<std::size_t>(c.dim), 0.0));
        if (static_cast<int>(c.source.size()) != c.dim) s.fail("source", "needs one coordinate per dimension");
        c.directions = static_cast<int>(s.integer("directions", c.directions, 1, 4096));
        const double cut = s.number("cutoff", -1.0);
        c.cutoff = cut > 0.0 ? cut : std::numeric_limits<double>::infinity();
        c.radii = s.numbers("radii", c.radii);
        c.max_sep = s.positive("max_sep", c.max_sep);
        c.min_sep = s.number("min_sep", c.min_sep);
        c.axis = static_cast<int>(s.integer("axis", c.axis, -1, c.dim - 1));
        c.k_max = static_cast<int>(s.integer("k_max", c.k_max, 0, 8));
        s.finish();
    }
    {
        detail::Section s(root, "diagnostics");
        c.n_max = static_cast<int>(s.integer("n_max", c.n_max, 3, 1000));
        s.finish();
    }
    {
        detail::Section s(root, "game");
        c.players = static_cast<int>(s.integer("N", c.players, 1, 64));
        c.budget = static_cast<long>(s.integer("budget", c.budget, 2, 100000000));
        c.quadrature = s.choice("quadrature", c.quadrature, {"auto", "tensor", "monte-carlo"});
        c.verify_player = s.boolean("verify", c.verify_player);
        s.finish();
    }
    {
        detail::Section s(root, "simulation");
        c.T = s.positive("T", c.T);
        c.dt = s.number("dt", c.dt);
        if (c.dt < 0.0) s.fail("dt", "must be positive (or 0 for h/4)");
        if (c.dt > 1.0 / c.n + 1e-15) s.fail("dt", "must not exceed the grid spacing 1/n");
        c.paths = static_cast<long>(s.integer("paths", c.paths, 1, 100000000));
        s.finish();
    }
    {
        detail::Section s(root, "verify");
        c.allowance_constant = s.number("allowance_constant", c.allowance_constant);
        c.max_se = s.positive("max_se", c.max_se);
        s.finish();
    }
    return c;
}

inline RunConfig load(const std::string& path) { return from_json(config::parse_file(path)); }

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

struct Check {
    std::string name;
    bool passed;
    double value;
    double bound;
    std::string note;
};

struct RunResult {
    int exit_code = 0;
    std::string status;
    std::string message;
    json manifest;
    json summary;
};

namespace detail {

class Artifacts {
public:
    explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        const auto p = dir_ / name;
        std::ofstream os(p, std::ios::binary);
        if (!os) throw ConfigError("cannot write output file '" + p.string() + "'");
        os << content;
        if (!os) throw ConfigError("cannot write output file '" + p.string() + "'");
        files_.push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a(content))}});
    }
    void grid_function(const std::string& name, const GridFunction& f, const std::string& value = "value") {
        std::ostringstream os;
        f.write_csv(os, value);
        write(name, os.str());
    }
    void json_file(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
    const json& list() const { return files_; }

private:
    std::filesystem::path dir_;
    json files_ = json::array();
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// JSON-safe number: non-finite values become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Setup {
    TorusGrid grid;
    VectorFieldFamily family;
    Discretization disc;
    std::shared_ptr<ControlModel> model;
    Coupling V;

    static Setup from(const RunConfig& c) {
        VectorFieldFamily fam = families::by_name(c.family, c.dim);
        TorusGrid g(fam.dim(), c.n);
        Potential F;
        const double a = c.amplitude;
        if (c.potential == "cos") F = [a](const Point& x) { return a * std::cos(kTwoPi * x[0]); };
        if (c.potential == "cos-sin")
            F = [a](const Point& x) { return a * (std::cos(kTwoPi * x[0]) + 0.5 * std::sin(kTwoPi * x[1])); };
        auto model = make_model(c.model, fam.size(), c.radius, F);
        Coupling V = make_coupling(g, c.coupling, c.coupling == "constant" ? 0.1 : c.sigma, c.G, c.strength, c.constant);
        Discretization disc(g, fam, c.scheme == "centered" ? Scheme::centered : Scheme::monotone);
        return Setup{g, std::move(fam), std::move(disc), std::move(model), std::move(V)};
    }
};

inline ErgodicOptions ergodic_options(const RunConfig& c) {
    ErgodicOptions o;
    o.rho0 = c.rho0;
    o.min_steps = c.min_steps;
    o.max_steps = c.max_steps;
    o.tol = c.ergodic_tol;
    o.inner.theta = c.theta;
    o.inner.tol = c.tol;
    o.inner.max_iter = c.max_iter;
    o.inner.hjb.tol = c.hjb_tol;
    return o;
}

inline MFGOptions mfg_options(const RunConfig& c) { return ergodic_options(c).inner; }

inline double fp_residual(const Discretization& disc, const SplitDrift& g, const Vec& m) {
    return (disc.generator(g).matrix.transpose() * m).lpNorm<Eigen::Infinity>();
}

inline SplitDrift drift_for(const RunConfig& c, const Setup& s) {
    if (c.drift == "zero") return {};
    const Vec rhs = s.V(Vec::Constant(s.grid.size(), 1.0));
    HJBOptions o;
    o.tol = c.hjb_tol;
    const HJBSolution hs = solve_discounted_hjb(s.disc, *s.model, c.rho, rhs, o);
    return evaluate_policy(s.disc, *s.model, hs.u.values()).split;
}

inline void measure_checks(std::vector<Check>& checks, const TorusGrid& g, const Vec& m, const std::string& who = "") {
    const double mass = std::abs(g.cell_volume() * m.sum() - 1.0);
    checks.push_back({who + "mass", mass <= 1e-12, mass, 1e-12, ""});
    checks.push_back({who + "positivity", m.minCoeff() > 0.0, m.minCoeff(), 0.0, "min m > 0"});
}

inline std::string rho_path_csv(const MFGSolution& s) {
    std::ostringstream os;
    os << "rho,lambda,w_sup,iterations,bound,residual\n";
    for (const auto& r : s.rho_path)
        os << fmt(r.rho) << ',' << fmt(r.lambda) << ',' << fmt(r.w_sup) << ',' << r.iterations << ',' << fmt(r.bound)
           << ',' << fmt(r.residual) << '\n';
    return os.str();
}

inline std::string fixed_point_csv(const std::vector<FixedPointEntry>& log) {
    std::ostringstream os;
    os << "iteration,change,theta\n";
    for (const auto& e : log) os << e.iteration << ',' << fmt(e.change) << ',' << fmt(e.theta) << '\n';
    return os.str();
}

/// Checks attached to an ergodic solve: lambda bound at every step, w bounded
/// and settled along the schedule, Cauchy gap, residuals, mass, positivity.
inline void ergodic_checks(std::vector<Check>& checks, const MFGSolution& s, double tol, const TorusGrid& g) {
    double worst = -std::numeric_limits<double>::infinity();
    double wmax = 0.0;
    for (const auto& r : s.rho_path) {
        worst = std::max(worst, std::abs(r.lambda) - r.bound);
        wmax = std::max(wmax, r.w_sup);
    }
    checks.push_back({"lambda-bound", worst <= 1e-8, worst, 1e-8, "max over steps of |rho <u>| - ||H(.,0) - V[m]||"});
    const std::size_t n = s.rho_path.size();
    const double settle = n >= 2 ? std::abs(s.rho_path[n - 1].w_sup - s.rho_path[n - 2].w_sup) / std::max(1.0, wmax) : 0.0;
    checks.push_back({"w-bound", settle <= 1e-3 && std::isfinite(wmax), wmax, 1e-3,
                      "value is max ||w_rho||; relative last increment " + fmt(settle)});
    const double gap = n >= 2 ? std::abs(s.rho_path[n - 1].lambda - s.rho_path[n - 2].lambda) : 0.0;
    checks.push_back({"cauchy-gap", gap <= tol, gap, tol, ""});
    checks.push_back({"hjb-residual", s.hjb_residual <= tol, s.hjb_residual, tol, ""});
    checks.push_back({"fp-residual", s.fp_residual <= 1e-7, s.fp_residual, 1e-7, ""});
    measure_checks(checks, g, s.m.m.values());
}

inline json mfg_summary(const MFGSolution& s) {
    json j{{"lambda", s.lambda},
           {"rho", s.rho},
           {"ergodic", s.ergodic},
           {"hjb_residual", s.hjb_residual},
           {"fp_residual", s.fp_residual},
           {"iterations", s.iterations},
           {"schedule_steps", s.rho_path.size()},
           {"warnings", s.warnings}};
    return j;
}

inline json report_json(const VerificationReport& r) {
    return {{"J_mean", r.J_mean},     {"J_se", r.J_se},
            {"lambda", r.lambda},     {"gap", r.gap},
            {"allowance", r.allowance}, {"inconclusive", r.inconclusive},
            {"deviation_gap", r.deviation_gap}, {"best_response_lambda", r.best_response_lambda},
            {"paths", r.ensemble.paths}, {"steps", r.ensemble.steps}};
}

inline void verification_checks(std::vector<Check>& checks, const VerificationReport& r, const std::string& who = "") {
    checks.push_back({who + "verification", r.inconclusive || r.J_ok, r.gap, 3.0 * r.J_se + r.allowance,
                      r.inconclusive ? "inconclusive: standard error above max_se" : "|J - lambda| <= 3 SE + C (h + dt)"});
    checks.push_back({who + "no-profitable-deviation", r.deviation_ok, r.deviation_gap, 1e-6, "lambda - lambda(best response)"});
}

inline std::string ensemble_csv(const PathEnsemble& e) {
    std::ostringstream os;
    os << "path,average_cost\n";
    for (std::size_t p = 0; p < e.path_average.size(); ++p) os << p << ',' << fmt(e.path_average[p]) << '\n';
    return os.str();
}

inline VerificationOptions verification_options(const RunConfig& c, const TorusGrid& g) {
    VerificationOptions o;
    o.sim.T = c.T;
    o.sim.dt = c.dt > 0.0 ? c.dt : g.h() / 4.0;
    o.sim.paths = c.paths;
    o.sim.seed = substream_seed(c.seed, "simulation");
    o.allowance_constant = c.allowance_constant;
    o.max_se = c.max_se;
    o.hjb.tol = c.hjb_tol;
    return o;
}

/// Execute the task, writing artifacts; returns the task summary.
inline json execute(const RunConfig& c, Artifacts& art, std::vector<Check>& checks) {
    const Setup s = Setup::from(c);
    const TorusGrid& g = s.grid;
    const Vec H0 = hamiltonian_at_zero(g, *s.model);
    json sum;

    if (c.task == "solve-mfg") {
        if (c.ergodic) {
            const MFGSolution sol = solve_ergodic_mfg(s.disc, *s.model, s.V, ergodic_options(c));
            sum = mfg_summary(sol);
            art.grid_function("u.csv", GridFunction(g, sol.w), "w");
            art.grid_function("m.csv", sol.m.m, "m");
            art.write("rho_path.csv", rho_path_csv(sol));
            ergodic_checks(checks, sol, c.ergodic_tol, g);
        } else {
            const MFGSolution sol = solve_discounted_mfg(s.disc, *s.model, s.V, c.rho, mfg_options(c));
            sum = mfg_summary(sol);
            art.grid_function("u.csv", sol.u, "u");
            art.grid_function("m.csv", sol.m.m, "m");
            art.write("fixed_point.csv", fixed_point_csv(sol.log));
            const double bound = (s.V(sol.m.m.values()) - H0).lpNorm<Eigen::Infinity>() / c.rho + 1e-8;
            checks.push_back({"max-principle", sol.u.sup_norm() <= bound, sol.u.sup_norm(), bound, "||u|| <= ||V[m] - H(.,0)|| / rho"});
            checks.push_back({"hjb-residual", sol.hjb_residual <= 1e-7, sol.hjb_residual, 1e-7, ""});
            checks.push_back({"fp-residual", sol.fp_residual <= 1e-7, sol.fp_residual, 1e-7, ""});
            measure_checks(checks, g, sol.m.m.values());
        }
    } else if (c.task == "solve-hjb") {
        const Vec rhs = s.V(Vec::Constant(g.size(), 1.0));
        HJBOptions o;
        o.tol = c.hjb_tol;
        const HJBSolution hs = solve_discounted_hjb(s.disc, *s.model, c.rho, rhs, o);
        art.grid_function("u.csv", hs.u, "u");
        std::ostringstream log;
        log << "iteration,residual,policy_changes\n";
        for (const auto& e : hs.log) log << e.iteration << ',' << fmt(e.residual) << ',' << e.policy_changes << '\n';
        art.write("convergence.csv", log.str());
        const double bound = (rhs - H0).lpNorm<Eigen::Infinity>() / c.rho + 1e-8;
        checks.push_back({"max-principle", hs.u.sup_norm() <= bound, hs.u.sup_norm(), bound, "||u|| <= ||f - H(.,0)|| / rho"});
        checks.push_back({"hjb-residual", hs.residual <= c.hjb_tol, hs.residual, c.hjb_tol, ""});
        sum = {{"rho", c.rho}, {"sup", hs.u.sup_norm()}, {"residual", hs.residual}, {"iterations", hs.iterations}, {"method", hs.method}};
    } else if (c.task == "solve-fp") {
        const SplitDrift drift = drift_for(c, s);
        const StationaryMeasure m = stationary_measure(s.disc, drift);
        art.grid_function("m.csv", m.m, "m");
        const double r = fp_residual(s.disc, drift, m.m.values());
        checks.push_back({"fp-residual", r <= 1e-7, r, 1e-7, ""});
        measure_checks(checks, g, m.m.values());
        sum = {{"iterations", m.iterations}, {"min", m.m.min()}, {"max", m.m.max()}, {"fp_residual", r}, {"drift", c.drift}};
    } else if (c.task == "ccdist") {
        Point x{};
        for (int j = 0; j < g.dim(); ++j) x[j] = c.source[static_cast<std::size_t>(j)];
        CCGraphOptions o;
        o.directions = c.directions;
        o.cutoff = c.cutoff;
        const DistanceMap mp = cc_distance_map(g, s.family, g.nearest(x), o);
        art.grid_function("distance.csv", mp.values, "d_cc");
        const int k_max = c.k_max > 0 ? c.k_max : (c.family == "euclidean" ? 1 : 2);
        sum = {{"source", mp.source}, {"error_bar", mp.error_bar()}, {"unreachable", mp.unreachable}};
        try {
            const auto fit = distance_equivalence_fit({mp}, k_max, c.max_sep, c.axis >= 0 ? along_axis(c.axis, g.dim()) : PairFilter{},
                                                      c.min_sep);
            sum["exponent"] = fit.exponent;
            sum["C_lower"] = fit.C_lower;
            sum["C_upper"] = fit.C_upper;
            sum["min_ratio"] = num(fit.min_ratio);
            sum["pairs"] = fit.pairs;
            sum["residuals"]["exponent_rmse"] = fit.rmse;
            checks.push_back({"exponent-consistent-with-step", fit.consistent_with_step, fit.exponent, 1.0 / k_max - 0.1, "1/k - 0.1 <= exponent <= 1.1"});
        } catch (const DomainError& e) {
            sum["exponent"] = nullptr;
            sum["exponent_error"] = e.what();
        }
        try {
            const auto Q = homogeneous_dimension_fit(mp, c.radii);
            sum["Q"] = Q.Q;
            sum["residuals"]["Q_rmse"] = Q.residual;
        } catch (const DomainError& e) {
            sum["Q"] = nullptr;
            sum["Q_error"] = e.what();
        }
        checks.push_back({"source-distance-zero", mp[mp.source] == 0.0, mp[mp.source], 0.0, ""});
        if (std::isinf(c.cutoff)) checks.push_back({"all-nodes-reachable", mp.unreachable == 0, double(mp.unreachable), 0.0, ""});
    } else if (c.task == "ergodic-diagnostics") {
        const SplitDrift drift = drift_for(c, s);
        GridFunction phi(g);
        for (Index i = 0; i < g.size(); ++i) phi[i] = std::cos(kTwoPi * g.point(i)[0]);
        const ErgodicDecay d = ergodic_decay_estimate(s.disc, drift, phi, c.n_max, nullptr, substream_seed(c.seed, "doeblin"));
        std::ostringstream os;
        os << "n,error,theorem_bound\n";
        for (const auto& e : d.errors) os << e.n << ',' << fmt(e.error) << ',' << fmt(e.theorem) << '\n';
        art.write("decay.csv", os.str());
        sum = {{"delta", d.delta},   {"sampled", d.sampled}, {"C_thm", d.C_thm},        {"k_thm", d.k_thm},
               {"C_fit", num(d.C_fit)}, {"k_fit", num(d.k_fit)}, {"fit_points", d.fit_points}, {"floor", d.floor}};
        checks.push_back({"doeblin-positive", d.delta > 0.0, d.delta, 0.0, ""});
        checks.push_back({"decay-bound", d.bound_holds, d.delta, 0.0, "e_n <= C_thm (1 - delta)^n for all n"});
    } else if (c.task == "nplayer") {
        NashOptions o;
        o.theta = c.theta;
        o.hjb.tol = c.hjb_tol;
        o.coupling.budget = c.budget;
        o.coupling.seed = substream_seed(c.seed, "coupling");
        o.coupling.mode = c.quadrature == "tensor" ? QuadratureMode::tensor
                          : c.quadrature == "monte-carlo" ? QuadratureMode::monte_carlo
                                                          : QuadratureMode::automatic;
        const NashSolution ns = solve_symmetric_nash(s.disc, *s.model, s.V, c.players, o);
        const MFGSolution mfg = solve_ergodic_mfg(s.disc, *s.model, s.V, ergodic_options(c));
        std::ostringstream os;
        os << "player,lambda,hjb_residual,fp_residual,kr_to_mfg\n";
        double dmax = 0.0, lmax = 0.0;
        json pl = json::array();
        for (std::size_t i = 0; i < ns.players.size(); ++i) {
            const NashPlayer& p = ns.players[i];
            const double d = kr_distance(g, p.m, mfg.m.m.values());
            dmax = std::max(dmax, d);
            lmax = std::max(lmax, std::abs(p.lambda - mfg.lambda));
            os << i << ',' << fmt(p.lambda) << ',' << fmt(p.hjb_residual) << ',' << fmt(p.fp_residual) << ',' << fmt(d) << '\n';
            pl.push_back({{"lambda", p.lambda}, {"hjb_residual", p.hjb_residual}, {"fp_residual", p.fp_residual}, {"kr_to_mfg", d}});
            measure_checks(checks, g, p.m, "player" + std::to_string(i) + "-");
        }
        art.write("players.csv", os.str());
        art.grid_function("m_player0.csv", GridFunction(g, ns.players[0].m), "m");
        sum = {{"N", c.players},          {"players", pl},
               {"lambda_spread", ns.lambda_spread}, {"u_spread", ns.u_spread},
               {"kr_spread", ns.kr_spread},  {"coupling_method", ns.coupling_method},
               {"coupling_se", ns.coupling_se}, {"iterations", ns.iterations},
               {"mfg_lambda", mfg.lambda},   {"max_kr_to_mfg", dmax},
               {"max_lambda_gap_to_mfg", lmax}};
        checks.push_back({"symmetric-players", ns.lambda_spread <= 1e-10 && ns.u_spread <= 1e-10, ns.lambda_spread, 1e-10, "symmetric start"});
        if (c.verify_player) {
            const VerificationReport r = verify_equilibrium(s.disc, *s.model, ns.players[0], verification_options(c, g));
            sum["verification"] = report_json(r);
            art.json_file("cost_summary.json", {{"J_mean", r.J_mean}, {"J_se", r.J_se}, {"lambda", r.lambda}, {"gap", r.gap}});
            art.grid_function("occupation.csv", r.ensemble.occupation, "density");
            verification_checks(checks, r, "player0-");
        }
    } else if (c.task == "simulate" || c.task == "verify") {
        const MFGSolution mfg = solve_ergodic_mfg(s.disc, *s.model, s.V, ergodic_options(c));
        const VerificationOptions vo = verification_options(c, g);
        if (c.task == "simulate") {
            const Policy pol = evaluate_policy(s.disc, *s.model, mfg.w);
            const PathEnsemble e = simulate_dynamics(s.family, g, interpolated_feedback(g, pol.drift),
                                                     model_payoff(*s.model, g, s.V(mfg.m.m.values())), vo.sim);
            const double d = kr_distance(g, e.occupation.values(), mfg.m.m.values());
            art.grid_function("occupation.csv", e.occupation, "density");
            art.write("path_costs.csv", ensemble_csv(e));
            art.json_file("cost_summary.json",
                          {{"J_mean", e.mean}, {"J_se", e.se}, {"lambda", mfg.lambda}, {"gap", std::abs(e.mean - mfg.lambda)}});
            sum = {{"J_mean", e.mean}, {"J_se", e.se},      {"lambda", mfg.lambda}, {"kr_occupation_to_m", d},
                   {"paths", e.paths}, {"steps", e.steps}, {"dt", e.dt},           {"T", e.T}};
            checks.push_back({"occupation-mass", std::abs(e.occupation.integral() - 1.0) <= 1e-12,
                              std::abs(e.occupation.integral() - 1.0), 1e-12, ""});
        } else {
            const VerificationReport r = verify_equilibrium(s.disc, *s.model, s.V, mfg, vo);
            sum = report_json(r);
            art.json_file("cost_summary.json", {{"J_mean", r.J_mean}, {"J_se", r.J_se}, {"lambda", r.lambda}, {"gap", r.gap}});
            art.grid_function("occupation.csv", r.ensemble.occupation, "density");
            verification_checks(checks, r);
        }
        ergodic_checks(checks, mfg, c.ergodic_tol, g);
    }
    art.json_file("summary.json", sum);
    return sum;
}

}  // namespace detail

/// Run one configured task into `out_dir`. Exit codes: 0 success, 1 invalid
/// configuration or unwritable output, 2 solver failure or a failed check.
/// A manifest.json with the input hash, wall time, artifact fingerprints
/// and every check is written whenever the output directory is usable.
inline RunResult run(const RunConfig& c, const std::string& out_dir, bool quiet = true, std::ostream& log = std::cerr) {
    namespace fs = std::filesystem;
    RunResult res;
    const auto t0 = std::chrono::steady_clock::now();
    const json norm = c.normalized();
    res.manifest = {{"tool", "hmfg"},
                    {"version", kVersion},
                    {"task", c.task},
                    {"seed", c.seed},
                    {"inputs_hash", hex64(fnv1a(norm.dump()))},
                    {"config", norm}};
    std::vector<Check> checks;
    std::optional<detail::Artifacts> art;
    try {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec || !fs::is_directory(out_dir)) throw ConfigError("out: cannot create output directory '" + out_dir + "'");
        art.emplace(out_dir);
        if (!quiet) log << "hmfg: running " << c.task << " into " << out_dir << '\n';
        res.summary = detail::execute(c, *art, checks);
        bool all = true;
        for (const auto& ch : checks) all = all && ch.passed;
        res.exit_code = all ? 0 : 2;
        res.status = all ? "ok" : "check-failed";
    } catch (const SolverError& e) {
        res.exit_code = 2;
        res.status = "solver-failure";
        res.message = std::string(e.what()) + " (residual " + detail::fmt(e.residual()) + ")";
    } catch (const DomainError& e) {
        res.exit_code = 1;
        res.status = "validation-error";
        res.message = e.what();
    } catch (const std::exception& e) {
        res.exit_code = 2;
        res.status = "solver-failure";
        res.message = e.what();
    }
    json jc = json::array();
    for (const auto& ch : checks)
        jc.push_back({{"name", ch.name}, {"passed", ch.passed}, {"value", detail::num(ch.value)}, {"bound", detail::num(ch.bound)}, {"note", ch.note}});
    res.manifest["checks"] = jc;
    res.manifest["all_checks_passed"] = res.exit_code == 0;
    res.manifest["status"] = res.status;
    res.manifest["exit_code"] = res.exit_code;
    res.manifest["message"] = res.message;
    res.manifest["artifacts"] = art ? art->list() : json::array();
    res.manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (art) {
        std::ofstream os(fs::path(out_dir) / "manifest.json");
        if (os) os << res.manifest.dump(2) << '\n';
    }
    if (!quiet || res.exit_code != 0) {
        if (res.exit_code == 0)
            log << "hmfg: " << c.task << " finished, all " << checks.size() << " checks passed\n";
        else if (!res.message.empty())
            log << "hmfg: " << res.status << ": " << res.message << '\n';
        else
            for (const auto& ch : checks)
                if (!ch.passed) log << "hmfg: check " << ch.name << " failed (value " << ch.value << ", bound " << ch.bound << ")\n";
    }
    return res;
}

}  // namespace hmfg::cli
