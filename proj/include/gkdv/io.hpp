#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gkdv/dynamics.hpp"
#include "gkdv/profile.hpp"

namespace gkdv {

using json = nlohmann::json;

class ConfigError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Run configuration: flat `key = value  # comment` text.

struct RunConfig {
    double p = 5.1;
    std::string y_min = "auto";      // number, or "auto" = -left_scale / b_c estimate
    double y_max = 40.0;
    std::size_t n = 4096;
    std::string ds = "auto";         // output interval in s, or "auto" = 0.01/b_c
    double stop_ratio = 1e-2;
    double s_horizon = 0.0;          // 0 = automatic
    double lambda0 = 1.0;
    double x0 = 0.0;
    std::string b0 = "critical";     // "critical", "<k>*critical", or a number
    std::string eps0 = "zero";       // "zero" | "random"
    double eps0_h1_power = 30.0;     // ∫(ε₀² + ε₀_y²) = eps0_h1_factor · b_c^eps0_h1_power
    double eps0_h1_factor = 0.5;
    double kappa = 0.1;
    double tol = 1e-8;
    std::string output_dir = "run";
    std::uint64_t seed = 1;

    /// Parsed b0 for a given b_c.
    double b0_value(double b_c) const {
        if (b0 == "critical") return b_c;
        auto star = b0.find("*critical");
        if (star != std::string::npos) return std::stod(b0.substr(0, star)) * b_c;
        return std::stod(b0);
    }

    double y_min_value(double b_est) const {
        if (y_min == "auto") return -ProfileOptions{}.left_scale / b_est;
        return std::stod(y_min);
    }

    double eps0_h1(double b_c) const { return eps0_h1_factor * std::pow(b_c, eps0_h1_power); }

    void validate() const {
        if (!(p > 5.0 && p <= kProfilePMax)) throw ConfigError("config: p must lie in (5, " + std::to_string(kProfilePMax) + "]");
        if (!(y_max > 20.0)) throw ConfigError("config: y_max must exceed 20");
        if (n < 256 || n > (1u << 20)) throw ConfigError("config: n must lie in [256, 2^20]");
        if (!(stop_ratio > 0.0 && stop_ratio < 1.0)) throw ConfigError("config: stop_ratio must lie in (0, 1)");
        if (!(s_horizon >= 0.0)) throw ConfigError("config: s_horizon must be >= 0");
        if (!(lambda0 > 0.0 && lambda0 <= 1.0)) throw ConfigError("config: lambda0 must lie in (0, 1]");
        if (eps0 != "zero" && eps0 != "random") throw ConfigError("config: eps0 must be zero or random");
        if (!(eps0_h1_factor >= 0.0)) throw ConfigError("config: eps0_h1_factor must be >= 0");
        if (!(kappa > 0.0 && kappa < 0.5)) throw ConfigError("config: kappa must lie in (0, 1/2)");
        if (!(tol > 0.0 && tol < 1e-2)) throw ConfigError("config: tol must lie in (0, 1e-2)");
        if (y_min != "auto") {
            double v = parse_number(y_min, "y_min");
            if (!(v < -20.0)) throw ConfigError("config: y_min must be below -20");
        }
        if (ds != "auto" && !(parse_number(ds, "ds") > 0.0)) throw ConfigError("config: ds must be positive");
        if (b0 != "critical") {
            auto star = b0.find("*critical");
            double v = parse_number(star == std::string::npos ? b0 : b0.substr(0, star), "b0");
            if (!(v > 0.0)) throw ConfigError("config: b0 must be positive");
        }
    }

    static double parse_number(const std::string& s, const std::string& key) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw ConfigError("config: " + key + " is not a number: '" + s + "'");
        }
        if (pos != s.size()) throw ConfigError("config: trailing characters in " + key + ": '" + s + "'");
        return v;
    }

    static RunConfig parse(std::istream& in) {
        RunConfig c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            auto trim = [](std::string s) {
                const char* ws = " \t\r";
                s.erase(0, s.find_first_not_of(ws));
                auto e = s.find_last_not_of(ws);
                s.erase(e == std::string::npos ? 0 : e + 1);
                return s;
            };
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
            c.set(key, val);
        }
        c.validate();
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path.string());
        return parse(in);
    }

    void set(const std::string& key, const std::string& val) {
        auto num = [&] { return parse_number(val, key); };
        if (key == "p") p = num();
        else if (key == "y_min") y_min = val;
        else if (key == "y_max") y_max = num();
        else if (key == "n") n = static_cast<std::size_t>(num());
        else if (key == "ds") ds = val;
        else if (key == "stop_ratio") stop_ratio = num();
        else if (key == "s_horizon") s_horizon = num();
        else if (key == "lambda0") lambda0 = num();
        else if (key == "x0") x0 = num();
        else if (key == "b0") b0 = val;
        else if (key == "eps0") eps0 = val;
        else if (key == "eps0_h1_power") eps0_h1_power = num();
        else if (key == "eps0_h1_factor") eps0_h1_factor = num();
        else if (key == "kappa") kappa = num();
        else if (key == "tol") tol = num();
        else if (key == "output_dir") output_dir = val;
        else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(val));
        else throw ConfigError("config: unknown key '" + key + "'");
    }

    std::string to_text() const {
        std::ostringstream o;
        o.precision(17);
        o << "# gkdv run configuration\n"
          << "p = " << p << "              # nonlinearity exponent (dimensionless)\n"
          << "y_min = " << y_min << "         # left end of the rescaled domain (y units; auto = -4/b_c estimate)\n"
          << "y_max = " << y_max << "            # right end of the rescaled domain (y units)\n"
          << "n = " << n << "               # grid nodes\n"
          << "ds = " << ds << "            # record interval in rescaled time s (auto = 0.01/b_c)\n"
          << "stop_ratio = " << stop_ratio << "     # stop when lambda/lambda0 falls below this\n"
          << "s_horizon = " << s_horizon << "        # maximal rescaled time (0 = automatic)\n"
          << "lambda0 = " << lambda0 << "          # initial scale\n"
          << "x0 = " << x0 << "               # initial centre (x units)\n"
          << "b0 = " << b0 << "        # initial b: critical | <k>*critical | number\n"
          << "eps0 = " << eps0 << "           # zero | random (seeded, OC-projected)\n"
          << "eps0_h1_power = " << eps0_h1_power << "   # H1 square amplitude = factor * b_c^power\n"
          << "eps0_h1_factor = " << eps0_h1_factor << "\n"
          << "kappa = " << kappa << "          # weight parameter\n"
          << "tol = " << tol << "          # embedded error tolerance per step\n"
          << "output_dir = " << output_dir << "\n"
          << "seed = " << seed << "             # counter-based generator seed (" << SplitMix64::name << ")\n";
        return o.str();
    }
};

// ---------------------------------------------------------------------------
// CSV series

inline constexpr int kSeriesSchemaVersion = 1;

inline const std::vector<std::string>& series_columns() {
    static const std::vector<std::string> cols{"s",       "t",     "lambda",  "x",          "b",
                                               "b_tilde", "N",     "F",       "E_tilde",    "eps_Lp0",
                                               "eps_dy_L2", "eps_L2", "dissipation", "rate_ratio", "res1", "res2", "res3",
                                               "mass_window"};
    return cols;
}

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_series_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& series) {
    const auto& cols = series_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
    out << "\n";
    for (const auto& r : series) {
        const double vals[] = {r.s,       r.t,       r.lambda,     r.x,          r.b,          r.b_tilde,
                               r.N,       r.F,       r.E_tilde,    r.eps_Lp0,    r.eps_dy_L2,  r.eps_L2,
                               r.dissipation, r.rate_ratio,
                               r.mod_res[0], r.mod_res[1], r.mod_res[2], r.mass_window};
        for (std::size_t k = 0; k < std::size(vals); ++k) out << (k ? "," : "") << format17(vals[k]);
        out << "\n";
    }
}

struct SeriesTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// Reads a series CSV; refuses a header that differs from the current schema.
inline SeriesTable read_series_csv(std::istream& in) {
    SeriesTable t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("series csv: empty input");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
    if (t.columns != series_columns())
        throw SchemaError("series csv: column set differs from schema v" + std::to_string(kSeriesSchemaVersion));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != t.columns.size()) throw SchemaError("series csv: ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Series records rebuilt from a table (margins are not persisted).
inline std::vector<DiagnosticsRecord> records_from_table(const SeriesTable& t) {
    std::vector<DiagnosticsRecord> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        DiagnosticsRecord r;
        double* fields[] = {&r.s,       &r.t,         &r.lambda,     &r.x,          &r.b,          &r.b_tilde,
                            &r.N,       &r.F,         &r.E_tilde,    &r.eps_Lp0,    &r.eps_dy_L2,  &r.eps_L2,
                            &r.dissipation, &r.rate_ratio, &r.mod_res[0], &r.mod_res[1], &r.mod_res[2], &r.mass_window};
        for (std::size_t k = 0; k < std::size(fields); ++k) *fields[k] = row[k];
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON records

inline json to_json(const Grid& g) { return json{{"y_min", g.y_min}, {"y_max", g.y_max}, {"n", g.n}}; }

inline Grid grid_from_json(const json& j) {
    return Grid(j.at("y_min").get<double>(), j.at("y_max").get<double>(), j.at("n").get<std::size_t>());
}

inline json to_json(const ProfileSolution& s) {
    return json{{"kind", "profile"},
                {"p", s.p},
                {"b", s.b},
                {"gamma", s.gamma},
                {"grid", to_json(s.v.grid())},
                {"values", s.v.vec()},
                {"residuals", {{"ode", s.ode_residual}, {"ortho", s.ortho_residual}}},
                {"tail_amplitude", s.tail_amplitude},
                {"newton_iters", s.newton_iters}};
}

inline ProfileSolution profile_from_json(const json& j) {
    ProfileSolution s;
    s.p = j.at("p").get<double>();
    s.b = j.at("b").get<double>();
    s.gamma = j.at("gamma").get<double>();
    Grid g = grid_from_json(j.at("grid"));
    s.v = GridFunction(g, j.at("values").get<std::vector<double>>());
    s.ode_residual = j.at("residuals").at("ode").get<double>();
    s.ortho_residual = j.at("residuals").at("ortho").get<double>();
    s.tail_amplitude = j.value("tail_amplitude", 0.0);
    s.newton_iters = j.value("newton_iters", 0);
    return s;
}

inline json to_json(const EigenvalueResult& r) {
    return json{{"kind", "eigenvalue"},
                {"p", r.p},
                {"b_c", r.b_c},
                {"gamma_at_bc", r.gamma_at_bc},
                {"energy_residual", r.energy_residual},
                {"slope_estimate", r.slope_estimate},
                {"dgamma_db", r.dgamma_db},
                {"b_energy_root", r.b_energy_root},
                {"root_mismatch", r.root_mismatch}};
}

inline json to_json(const BootstrapReport& r) {
    json j = json::object();
    for (const auto& [name, b] : r.bounds)
        j[name] = {{"passed", b.passed}, {"worst_margin", b.worst_margin}, {"fitted_constant", b.fitted_constant}};
    return j;
}

inline json to_json(const MonotonicityReport& m) {
    return json{{"mu", m.mu},           {"C_cap", m.C_cap},       {"fraction_passed", m.fraction_passed},
                {"worst_violation", m.worst_violation}, {"C_fit", m.C_fit}, {"mu_fit", m.mu_fit},
                {"steps", m.steps},     {"violations", m.violations}, {"E_C_fit", m.E_C_fit},
                {"E_rescaled_C_fit", m.E_rescaled_C_fit}};
}

/// Non-finite doubles become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json verdicts_json(const RunArtifact& a) {
    const auto& v = a.verdicts;
    json j{{"termination", v.termination},
           {"in_Op", v.in_Op},
           {"trapped", v.trapped},
           {"b_trapped", v.b_trapped},
           {"rate_ratio_band", v.rate_ratio_band},
           {"rate_ratio_min", num(v.rate_ratio_min)},
           {"rate_ratio_max", num(v.rate_ratio_max)},
           {"T_fit", num(v.T_fit)},
           {"T_fit_r2", num(v.T_fit_r2)},
           {"T_global", num(v.T_global)},
           {"global_r2", num(v.global_r2)},
           {"slope_ratio", num(v.slope_ratio)},
           {"x_converged", v.x_converged},
           {"x_tail_variation", num(v.x_tail_variation)},
           {"x_final", num(v.x_final)},
           {"mass_drift", num(v.mass_drift)},
           {"time_consistency", num(v.time_consistency)},
           {"K_mes1", num(v.K_mes1)},
           {"K_mes1_bc", num(v.K_mes1_bc)},
           {"K_mes2", num(v.K_mes2)},
           {"K_mes3", num(v.K_mes3)},
           {"final_lambda_ratio", num(v.final_lambda_ratio)},
           {"p", a.p},
           {"b_c", a.b_c},
           {"series_schema_version", kSeriesSchemaVersion},
           {"steps", a.steps},
           {"rejected", a.rejected},
           {"resamples", a.resamples}};
    if (a.cp_fit)
        j["c_p_fit"] = {{"c_p", a.cp_fit->c_p}, {"c_p_affine", a.cp_fit->c_p_affine}, {"r2", a.cp_fit->r2}};
    return j;
}

inline json snapshot_json(const Snapshot& s, double p) {
    return json{{"kind", "snapshot"},
                {"p", p},
                {"s", s.mod.s},
                {"t", s.mod.t},
                {"lambda", s.mod.lambda},
                {"x", s.mod.x_c},
                {"b", s.mod.b},
                {"grid", to_json(s.w.grid())},
                {"values", s.w.vec()}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Writes config copy, series.csv, snapshots/, verdicts.json, audit.json and log.txt.
inline void write_artifact(const std::filesystem::path& dir, const RunConfig& cfg, const RunArtifact& a) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "snapshots");
    write_text(dir / "config.txt", cfg.to_text());
    {
        std::ofstream out(dir / "series.csv", std::ios::binary);
        write_series_csv(out, a.series);
    }
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "snap_%03zu.json", k);
        write_json(dir / "snapshots" / name, snapshot_json(a.snapshots[k], a.p));
    }
    write_json(dir / "verdicts.json", verdicts_json(a));
    write_json(dir / "audit.json",
               json{{"bootstrap", to_json(a.bootstrap)}, {"monotonicity", to_json(a.monotonicity)}});
    std::ostringstream log;
    for (const auto& line : a.log) log << line << "\n";
    write_text(dir / "log.txt", log.str());
}

}  // namespace gkdv
