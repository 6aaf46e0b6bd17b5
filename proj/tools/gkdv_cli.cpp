// gkdv_cli: profile | simulate | sweep | verify | audit
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gkdv.hpp"

namespace fs = std::filesystem;
using namespace gkdv;

namespace {

int cmd_profile(double p, std::optional<double> b, const fs::path& out) {
    fs::create_directories(out);
    if (b) {
        if (!(*b >= 0.0)) throw DomainError("profile: b must be >= 0");
        ProfileSolver solver(p);
        ProfileSolution s = *b == 0.0 ? solver.ground() : solver.continuation(*b).back();
        write_json(out / "profile.json", to_json(s));
        std::printf("p = %.6g  b = %.10g  gamma = %.10f  energy = %.3e  ode residual = %.2e\n", p, s.b, s.gamma,
                    energy(s.v, p), s.ode_residual);
        return 0;
    }
    if (!(p > 5.0)) throw DomainError("profile: the eigenvalue search needs p > 5 (pass --b for p = 5)");
    ProfileSolver solver(p);
    EigenvalueResult r = find_critical_b(solver);
    write_json(out / "profile.json", to_json(r.at_bc));
    write_json(out / "eigenvalue.json", to_json(r));
    std::printf("p = %.6g  b_c = %.10f  gamma = %.10f  energy residual = %.3e  slope b_c/(p-5) = %.5f\n", p, r.b_c,
                r.gamma_at_bc, r.energy_residual, r.slope_estimate);
    return 0;
}

void print_verdicts(const RunArtifact& a) {
    const auto& v = a.verdicts;
    std::printf("termination %s  steps %zu  records %zu  %.1fs\n", v.termination.c_str(), a.steps, a.series.size(),
                a.runtime_s);
    std::printf("trapped %d  rate band %d [%.4f, %.4f]  T_fit %.6f (R2 %.6f)  mass drift %.2e\n", v.trapped,
                v.rate_ratio_band, v.rate_ratio_min, v.rate_ratio_max, v.T_fit, v.T_fit_r2, v.mass_drift);
    for (const auto& [name, b] : a.bootstrap.bounds)
        std::printf("  %-10s passed %d  fitted constant %.3e\n", name.c_str(), b.passed, b.fitted_constant);
}

int cmd_simulate(const fs::path& config, const std::string& out_override) {
    RunConfig cfg = RunConfig::load(config);
    if (!out_override.empty()) cfg.output_dir = out_override;
    auto setup = prepare(cfg.p, config_grid(cfg));
    std::printf("b_c = %.10f\n", setup->b_c());
    RunArtifact a = run_config(cfg, *setup);
    print_verdicts(a);
    return run_succeeded(a) ? 0 : 1;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_sweep(const fs::path& base_cfg, const std::string& b0_list, const std::string& seed_list,
              const fs::path& out, unsigned threads) {
    RunConfig base = RunConfig::load(base_cfg);
    auto b0s = b0_list.empty() ? std::vector<std::string>{base.b0} : split(b0_list);
    auto seeds = seed_list.empty() ? std::vector<std::string>{std::to_string(base.seed)} : split(seed_list);
    std::vector<RunConfig> runs;
    for (const auto& b0 : b0s)
        for (const auto& sd : seeds) {
            RunConfig c = base;
            c.set("b0", b0);
            c.set("seed", sd);
            c.output_dir = (out / ("run_" + std::to_string(runs.size()))).string();
            c.validate();
            runs.push_back(c);
        }
    auto res = run_sweep(runs, threads);
    int failures = 0;
    for (const auto& r : res) {
        std::printf("%-20s b0=%-14s seed=%-6llu trapped=%d band=%d %s\n", r.config.output_dir.c_str(),
                    r.config.b0.c_str(), static_cast<unsigned long long>(r.config.seed), r.trapped, r.rate_band,
                    r.error.c_str());
        failures += r.ok ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}

int cmd_verify(bool quick, bool as_json) {
    VerifySummary s = run_verify(quick);
    if (as_json) {
        std::cout << to_json(s).dump(2) << "\n";
    } else {
        for (const auto& c : s.checks)
            std::printf("%-4s %-38s value %-12.4e threshold %-10.3g %5.1fs %s\n", c.passed ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.threshold, c.seconds, c.detail.c_str());
        std::printf("%s\n", s.all_passed() ? "all checks passed" : "some checks failed");
    }
    return s.all_passed() ? 0 : 1;
}

SeriesTable load_series(const fs::path& dir) {
    std::ifstream in(dir / "series.csv");
    if (!in) throw Error("audit: no series.csv in " + dir.string());
    return read_series_csv(in);
}

int cmd_audit(const fs::path& dir, const fs::path& against) {
    std::ifstream vin(dir / "verdicts.json");
    if (!vin) throw Error("audit: no verdicts.json in " + dir.string());
    json verdicts = json::parse(vin);
    if (verdicts.value("series_schema_version", 0) != kSeriesSchemaVersion)
        throw SchemaError("audit: run was written with a different series schema version");
    const double p = verdicts.at("p").get<double>(), b_c = verdicts.at("b_c").get<double>();
    auto series = records_from_table(load_series(dir));

    BootstrapReport boot = bootstrap_audit(series, BootstrapThresholds{kNu, b_c});
    MonotonicityReport mono = monotonicity_audit(series, b_c, p);
    json report{{"bootstrap", to_json(boot)}, {"monotonicity", to_json(mono)}, {"trapped", boot.trapped}};

    if (!against.empty()) {
        std::ifstream oin(against / "verdicts.json");
        if (!oin) throw Error("audit: no verdicts.json in " + against.string());
        if (json::parse(oin).value("series_schema_version", 0) != kSeriesSchemaVersion)
            throw SchemaError("audit: refusing to compare runs with different series schema versions");
        SeriesTable a = load_series(dir), b = load_series(against);
        json diff = json::object();
        const std::size_t rows = std::min(a.rows.size(), b.rows.size());
        for (std::size_t c = 0; c < a.columns.size(); ++c) {
            double m = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                double x = a.rows[r][c], y = b.rows[r][c];
                if (std::isnan(x) && std::isnan(y)) continue;
                m = std::max(m, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300}));
            }
            diff[a.columns[c]] = m;
        }
        report["comparison"] = {{"rows", rows}, {"identical_length", a.rows.size() == b.rows.size()},
                                {"max_relative_difference", diff}};
    }
    std::cout << report.dump(2) << "\n";
    return boot.trapped ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gkdv laboratory: self-similar profiles and rescaled blow-up dynamics"};
    app.require_subcommand(1);

    auto* prof = app.add_subcommand("profile", "solve the self-similar profile / find b_c");
    double p = 5.1;
    std::optional<double> b;
    std::string out = "profile_out";
    prof->add_option("--p", p, "nonlinearity exponent")->required();
    prof->add_option("--b", b, "solve at this b instead of searching b_c");
    prof->add_option("--out", out, "output directory");

    auto* sim = app.add_subcommand("simulate", "run one configuration");
    std::string config, sim_out;
    sim->add_option("config", config, "run configuration file")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", sim_out, "override output_dir");

    auto* sweep = app.add_subcommand("sweep", "independent runs over b0 and seed lists, concurrently");
    std::string b0_list, seed_list, sweep_out = "sweep_out";
    unsigned threads = 0;
    sweep->add_option("config", config, "base configuration")->required()->check(CLI::ExistingFile);
    sweep->add_option("--b0", b0_list, "comma-separated b0 values (e.g. critical,2*critical)");
    sweep->add_option("--seeds", seed_list, "comma-separated seeds");
    sweep->add_option("--out", sweep_out, "parent directory of the run directories");
    sweep->add_option("--threads", threads, "worker threads (0 = hardware)");

    auto* ver = app.add_subcommand("verify", "invariant suite");
    bool quick = false, as_json = false;
    ver->add_flag("--quick", quick, "fast subset");
    ver->add_flag("--json", as_json, "machine-readable output");

    auto* aud = app.add_subcommand("audit", "re-audit a run directory from its series");
    std::string run_dir, against;
    aud->add_option("run", run_dir, "artifact directory")->required()->check(CLI::ExistingDirectory);
    aud->add_option("--against", against, "second artifact directory to compare with")
        ->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*prof) return cmd_profile(p, b, out);
        if (*sim) return cmd_simulate(config, sim_out);
        if (*sweep) return cmd_sweep(config, b0_list, seed_list, sweep_out, threads);
        if (*ver) return cmd_verify(quick, as_json);
        if (*aud) return cmd_audit(run_dir, against);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
