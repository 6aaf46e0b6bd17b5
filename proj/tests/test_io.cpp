#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "gkdv/io.hpp"

using namespace gkdv;
namespace fs = std::filesystem;
using Catch::Matchers::WithinRel;

namespace {
fs::path scratch_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("gkdv_test_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

TEST_CASE("config parsing", "[io]") {
    std::istringstream in(R"(# reference
p = 5.1          # exponent
n = 2048
b0 = 1.5*critical
eps0 = random
seed = 42
output_dir = out/ref
)");
    RunConfig c = RunConfig::parse(in);
    CHECK(c.p == 5.1);
    CHECK(c.n == 2048);
    CHECK(c.seed == 42);
    CHECK(c.output_dir == "out/ref");
    CHECK_THAT(c.b0_value(0.02), WithinRel(0.03, 1e-14));
    CHECK(c.eps0 == "random");
    CHECK_THAT(c.eps0_h1(0.5), WithinRel(0.5 * std::pow(0.5, 30.0), 1e-14));

    // round trip through the serialized text
    std::istringstream again(c.to_text());
    RunConfig d = RunConfig::parse(again);
    CHECK(d.to_text() == c.to_text());
}

TEST_CASE("config validation", "[io]") {
    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return RunConfig::parse(in);
    };
    CHECK_THROWS_AS(parse("p = 7\n"), ConfigError);
    CHECK_THROWS_AS(parse("p = 5\n"), ConfigError);
    CHECK_THROWS_AS(parse("colour = blue\n"), ConfigError);
    CHECK_THROWS_AS(parse("n = 12\n"), ConfigError);
    CHECK_THROWS_AS(parse("stop_ratio = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("eps0 = gaussian\n"), ConfigError);
    CHECK_THROWS_AS(parse("b0 = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse("y_min = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse("tol = 1e-8x\n"), ConfigError);
    CHECK_THROWS_AS(parse("just words\n"), ConfigError);
    CHECK_NOTHROW(parse("# nothing but comments\n\n"));
}

TEST_CASE("series csv round trip is exact", "[io]") {
    std::vector<DiagnosticsRecord> series(3);
    for (std::size_t k = 0; k < 3; ++k) {
        auto& r = series[k];
        r.s = 0.1 * static_cast<double>(k) + 1.0 / 3.0;
        r.lambda = std::exp(-0.0221918 * r.s);
        r.b = 0.022191850000000001;
        r.F = -1.2345678901234567e-12;
        r.mod_res = {1e-300, -2.5e-17, 3.0};
        r.mass_window = 2.6859022712345678;
    }
    std::stringstream ss;
    write_series_csv(ss, series);
    auto t = read_series_csv(ss);
    REQUIRE(t.rows.size() == 3);
    auto back = records_from_table(t);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(back[k].s == series[k].s);
        CHECK(back[k].lambda == series[k].lambda);
        CHECK(back[k].F == series[k].F);
        CHECK(back[k].mod_res == series[k].mod_res);
        CHECK(back[k].mass_window == series[k].mass_window);
        CHECK(std::isnan(back[k].rate_ratio));
    }
}

TEST_CASE("series reader refuses another schema", "[io]") {
    std::istringstream old("s,t,lambda,x,b\n0,0,1,0,0.02\n");
    CHECK_THROWS_AS(read_series_csv(old), SchemaError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_series_csv(empty), SchemaError);
    std::stringstream ss;
    write_series_csv(ss, {});
    std::string text = ss.str() + "1,2,3\n";
    std::istringstream ragged(text);
    CHECK_THROWS_AS(read_series_csv(ragged), SchemaError);
}

TEST_CASE("profile json round trip", "[io]") {
    ProfileSolver S(5.0);
    auto s = S.ground();
    auto j = to_json(s);
    auto back = profile_from_json(json::parse(j.dump()));
    CHECK(back.v.grid() == s.v.grid());
    CHECK(back.v.vec() == s.v.vec());
    CHECK(back.gamma == s.gamma);
    CHECK(j.at("residuals").contains("ode"));
}

TEST_CASE("artifact directory and determinism of the written series", "[io]") {
    const auto& setup = testing::reference_setup();
    RunConfig cfg;
    cfg.output_dir = scratch_dir("a").string();
    auto a = run_config(cfg, setup);
    RunConfig cfg2 = cfg;
    cfg2.output_dir = scratch_dir("b").string();
    run_config(cfg2, setup);

    for (const char* f : {"config.txt", "series.csv", "verdicts.json", "audit.json", "log.txt"})
        CHECK(fs::exists(fs::path(cfg.output_dir) / f));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "snapshots" / "snap_000.json"));
    CHECK(slurp(fs::path(cfg.output_dir) / "series.csv") == slurp(fs::path(cfg2.output_dir) / "series.csv"));

    auto verdicts = json::parse(slurp(fs::path(cfg.output_dir) / "verdicts.json"));
    CHECK(verdicts.at("trapped").get<bool>());
    CHECK(verdicts.at("series_schema_version").get<int>() == kSeriesSchemaVersion);
    auto audit = json::parse(slurp(fs::path(cfg.output_dir) / "audit.json"));
    for (const char* b : {"b_tilde", "N", "eps_Lp0", "eps_dy_L2"}) {
        const auto& e = audit.at("bootstrap").at(b);
        CHECK(e.contains("passed"));
        CHECK(e.contains("worst_margin"));
        CHECK(e.contains("fitted_constant"));
    }
    CHECK(slurp(fs::path(cfg.output_dir) / "log.txt").find("splitmix64") != std::string::npos);
    CHECK(run_succeeded(a));

    // The persisted series re-audits to the same verdict.
    std::ifstream in(fs::path(cfg.output_dir) / "series.csv");
    auto series = records_from_table(read_series_csv(in));
    CHECK(bootstrap_audit(series, BootstrapThresholds{kNu, setup.b_c()}).trapped);
}

TEST_CASE("verify summary json", "[io]") {
    VerifySummary s;
    s.checks.push_back({"a", true, 1.0, 2.0, "", 0.0});
    s.checks.push_back({"b", false, std::nan(""), 2.0, "error", 0.0});
    auto j = to_json(s);
    CHECK(j.at("schema_version") == kVerifySchemaVersion);
    CHECK_FALSE(j.at("all_passed").get<bool>());
    CHECK(j.at("checks")[1].at("value").is_null());
}
