#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmfg/hmfg.hpp"

using namespace hmfg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hmfg_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

cli::RunResult run_text(const std::string& text, const fs::path& out) {
    std::ostringstream sink;
    return cli::run(cli::from_json(config::parse(text)), out.string(), true, sink);
}

const char* kMinimal = R"(
task = "solve-mfg"
[family]
name = "euclidean"
dim = 1
[grid]
n = 16
[model]
kind = "trivial"
[coupling]
kind = "constant"
constant = 0.75
)";

}  // namespace

TEST(ConfigParser, SectionsValuesAndComments) {
    const auto j = config::parse(R"(
# comment
title = "a # not a comment"
[solver]
rho = 0.25   # trailing
steps = 1_000
on = true
radii = [0.1, 0.2, 3]
[a.b]
c.d = 'lit\eral'
)");
    EXPECT_EQ(j["title"], "a # not a comment");
    EXPECT_DOUBLE_EQ(j["solver"]["rho"].get<double>(), 0.25);
    EXPECT_EQ(j["solver"]["steps"].get<long long>(), 1000);
    EXPECT_TRUE(j["solver"]["on"].get<bool>());
    EXPECT_EQ(j["solver"]["radii"].size(), 3u);
    EXPECT_EQ(j["a"]["b"]["c"]["d"], "lit\\eral");
}

TEST(ConfigParser, ReportsLineOfSyntaxErrors) {
    try {
        config::parse("a = 1\nb = \n");
        FAIL();
    } catch (const config::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(config::parse("a = 1\na = 2\n"), config::ConfigError);
    EXPECT_THROW(config::parse("[s\n"), config::ConfigError);
    EXPECT_THROW(config::parse("x = [1, 2\n"), config::ConfigError);
}

TEST(RunConfig, FieldLevelValidation) {
    auto msg = [](const std::string& text) {
        try {
            cli::from_json(config::parse(text));
        } catch (const config::ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_EQ(msg("task = \"solve-mfg\"\n[solver]\nrho0 = -1\n").rfind("solver.rho0: must be positive", 0), 0u);
    EXPECT_EQ(msg("task = \"solve-mfg\"\n[grid]\nn = 3\n").rfind("grid.n:", 0), 0u);
    EXPECT_EQ(msg("task = \"solve-mfg\"\n[coupling]\nsigma = 0.5\n").rfind("coupling.sigma:", 0), 0u);
    EXPECT_EQ(msg("task = \"solve-mfg\"\n[model]\nkind = \"cubic\"\n").rfind("model.kind: unknown value", 0), 0u);
    EXPECT_EQ(msg("task = \"solve-mfg\"\n[grid]\nnn = 8\n").rfind("grid.nn: unknown key", 0), 0u);
    EXPECT_EQ(msg("task = \"dance\"\n").rfind("task: unknown value", 0), 0u);
    EXPECT_EQ(msg("[grid]\nn = 8\n").rfind("task: required", 0), 0u);
    EXPECT_EQ(msg("task = \"ccdist\"\n[family]\nname = \"grushin\"\ndim = 3\n").rfind("family.dim:", 0), 0u);
    EXPECT_EQ(msg(kMinimal), "accepted");
}

TEST(Run, MinimalConfigGivesLambdaEqualToTheConstant) {
    const auto out = scratch("minimal");
    const auto r = run_text(kMinimal, out);
    ASSERT_EQ(r.exit_code, 0) << r.message;
    EXPECT_NEAR(r.summary["lambda"].get<double>(), 0.75, 1e-10);
    const auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(man["status"], "ok");
    EXPECT_EQ(man["tool"], "hmfg");
    EXPECT_EQ(man["inputs_hash"].get<std::string>().size(), 16u);
    for (const auto& a : man["artifacts"]) {
        const std::string body = slurp(out / a["file"].get<std::string>());
        EXPECT_EQ(a["fnv1a64"], cli::hex64(cli::fnv1a(body)));
    }
    std::set<std::string> names;
    for (const auto& c : man["checks"]) names.insert(c["name"].get<std::string>());
    for (const char* n : {"lambda-bound", "w-bound", "cauchy-gap", "hjb-residual", "fp-residual", "mass", "positivity"})
        EXPECT_TRUE(names.count(n)) << n;
}

TEST(Run, DiscountedRunRecordsMaximumPrinciple) {
    const auto out = scratch("discounted");
    const auto r = run_text(std::string(kMinimal) + "[solver]\nergodic = false\nrho = 0.5\n", out);
    ASSERT_EQ(r.exit_code, 0) << r.message;
    bool seen = false;
    for (const auto& c : r.manifest["checks"]) seen = seen || c["name"] == "max-principle";
    EXPECT_TRUE(seen);
}

TEST(Run, UnwritableOutputIsAValidationError) {
    const auto blocker = scratch("blocker");
    std::ofstream(blocker) << "file";
    const auto r = run_text(kMinimal, blocker / "sub");
    EXPECT_EQ(r.exit_code, 1);
    fs::remove(blocker);
}

TEST(Run, ArtifactsAreByteIdenticalAcrossRuns) {
    const std::string text = R"(
task = "verify"
seed = 5
[family]
name = "euclidean"
[grid]
n = 16
[model]
kind = "quadratic"
potential = "cos"
[coupling]
kind = "linear-convolution"
sigma = 0.15
[simulation]
T = 4
paths = 200
)";
    const auto a = scratch("det_a"), b = scratch("det_b");
    const auto ra = run_text(text, a), rb = run_text(text, b);
    ASSERT_EQ(ra.exit_code, rb.exit_code);
    ASSERT_EQ(ra.manifest["artifacts"], rb.manifest["artifacts"]);
    for (const auto& art : ra.manifest["artifacts"]) {
        const auto f = art["file"].get<std::string>();
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_EQ(ra.manifest["inputs_hash"], rb.manifest["inputs_hash"]);
}

TEST(Run, SeedChangesSimulationButNotInputsOfOtherSections) {
    const std::string base = "task = \"simulate\"\n[grid]\nn = 16\n[model]\npotential = \"cos\"\n[simulation]\nT = 2\npaths = 100\n";
    const auto a = run_text("seed = 1\n" + base, scratch("seed1"));
    const auto b = run_text("seed = 2\n" + base, scratch("seed2"));
    EXPECT_NE(a.summary["J_mean"], b.summary["J_mean"]);
    EXPECT_NE(a.manifest["inputs_hash"], b.manifest["inputs_hash"]);
    EXPECT_EQ(a.summary["lambda"], b.summary["lambda"]);
}

TEST(Substreams, NamedStreamsDiffer) {
    EXPECT_NE(cli::substream_seed(1, "simulation"), cli::substream_seed(1, "coupling"));
    EXPECT_NE(cli::substream_seed(1, "simulation"), cli::substream_seed(2, "simulation"));
    EXPECT_EQ(cli::substream_seed(9, "doeblin"), cli::substream_seed(9, "doeblin"));
}
