#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <tuple>
#include <vector>

#include "gkdv/dynamics.hpp"
#include "gkdv/io.hpp"
#include "gkdv/localized.hpp"

namespace gkdv {

/// Everything a run at fixed (p, grid) shares: ground state, b_c and the interpolated family.
struct Setup {
    double p = 5.1;
    Grid grid;
    GroundStateContext ctx;
    EigenvalueResult eig;
    ProfileFamily family;

    double b_c() const { return eig.b_c; }
};

inline Grid config_grid(const RunConfig& cfg) {
    return Grid(cfg.y_min_value(critical_b_estimate(cfg.p)), cfg.y_max, cfg.n);
}

inline std::shared_ptr<const Setup> prepare(double p, const Grid& g) {
    auto s = std::make_shared<Setup>();
    s->p = p;
    s->grid = g;
    ProfileSolver solver(p, g);
    s->eig = find_critical_b(solver);
    s->family = ProfileFamily(solver, s->eig.at_bc, s->eig.b_c);
    s->ctx = ground_state(p, g);
    return s;
}

inline DynamicsConfig dynamics_config(const RunConfig& cfg, double b_c) {
    DynamicsConfig d;
    d.stop_ratio = cfg.stop_ratio;
    d.s_horizon = cfg.s_horizon;
    d.tol = cfg.tol;
    d.kappa = cfg.kappa;
    if (cfg.ds != "auto") d.output_ds_factor = RunConfig::parse_number(cfg.ds, "ds") * b_c;
    return d;
}

inline InitialData initial_data(const RunConfig& cfg, const Setup& s) {
    InitialData init{cfg.lambda0, cfg.x0, cfg.b0_value(s.b_c()), {}};
    if (cfg.eps0 == "random") init.eps0 = seeded_perturbation(s.ctx, cfg.eps0_h1(s.b_c()), cfg.seed);
    return init;
}

/// Runs one configuration. Artifacts are written when `write` is set; a failing run
/// still leaves config.txt and log.txt behind.
inline RunArtifact run_config(const RunConfig& cfg, const Setup& s, bool write = true) {
    namespace fs = std::filesystem;
    BlowupSimulation sim(s.ctx, s.family, dynamics_config(cfg, s.b_c()));
    InitialData init = initial_data(cfg, s);
    RunArtifact a;
    try {
        a = sim.run(init);
    } catch (const std::exception& e) {
        if (write) {
            fs::create_directories(cfg.output_dir);
            write_text(fs::path(cfg.output_dir) / "config.txt", cfg.to_text());
            write_text(fs::path(cfg.output_dir) / "log.txt", std::string("run failed: ") + e.what() + "\n");
        }
        throw;
    }
    a.log.insert(a.log.begin(), std::string("rng ") + SplitMix64::name + " seed " + std::to_string(cfg.seed) +
                                    " eps0 " + cfg.eps0 + " h1_square " + format17(init.h1_square()) +
                                    " in_Op " + (init.in_Op(s.b_c()) ? "1" : "0"));
    if (write) write_artifact(cfg.output_dir, cfg, a);
    return a;
}

/// Exit-code verdict of a simulate run.
inline bool run_succeeded(const RunArtifact& a) { return a.verdicts.trapped && a.verdicts.rate_ratio_band; }

struct SweepResult {
    RunConfig config;
    bool ok = false;
    bool trapped = false;
    bool rate_band = false;
    std::string error;
};

/// Independent runs executed concurrently; setups are shared per (p, grid) and each
/// run owns its output directory.
inline std::vector<SweepResult> run_sweep(const std::vector<RunConfig>& cfgs, unsigned threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t i = 0; i < cfgs.size(); ++i)
        for (std::size_t j = i + 1; j < cfgs.size(); ++j)
            if (std::filesystem::weakly_canonical(cfgs[i].output_dir) ==
                std::filesystem::weakly_canonical(cfgs[j].output_dir))
                throw ConfigError("sweep: runs " + std::to_string(i) + " and " + std::to_string(j) +
                                  " share an output directory");

    std::map<std::tuple<double, double, double, std::size_t>, std::shared_ptr<const Setup>> setups;
    std::mutex mu;
    auto setup_for = [&](const RunConfig& c) {
        Grid g = config_grid(c);
        auto key = std::make_tuple(c.p, g.y_min, g.y_max, g.n);
        {
            std::lock_guard lock(mu);
            if (auto it = setups.find(key); it != setups.end()) return it->second;
        }
        auto s = prepare(c.p, g);
        std::lock_guard lock(mu);
        return setups.emplace(key, s).first->second;
    };

    std::vector<SweepResult> out(cfgs.size());
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard lock(mu);
                if (next >= cfgs.size()) return;
                k = next++;
            }
            SweepResult& r = out[k];
            r.config = cfgs[k];
            try {
                auto a = run_config(cfgs[k], *setup_for(cfgs[k]));
                r.trapped = a.verdicts.trapped;
                r.rate_band = a.verdicts.rate_ratio_band;
                r.ok = run_succeeded(a);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(threads, cfgs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace gkdv
