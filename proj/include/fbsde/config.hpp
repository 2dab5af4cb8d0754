// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/format.hpp"
#include "fbsde/functions.hpp"
#include "fbsde/model.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

/// Optional comparison setup: the main model plays the role of model 2.
struct CompareSpec {
    DriverSpec driver1;
    ScalarFunction g1;
    DriverSpec driver_bar;
    ScalarFunction g_bar;

    bool operator==(const CompareSpec&) const = default;
};

struct GridParams {
    std::size_t n_steps = 200;  // over [0, T+K]
    std::size_t n_space = 240;
    double x_span = 6.0;

    bool operator==(const GridParams&) const = default;
};

struct MonteCarloParams {
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;

    bool operator==(const MonteCarloParams&) const = default;
};

/// Everything one run needs. The text form is
///
///   [coefficients] hurst, eta0, b, sigma
///   [delays]       K, L, delta, zeta
///   [driver]       kind, params, lipschitz
///   [terminal]     g, h, degree
///   [grid]         T, n_steps, n_space, x_span
///   [solver]       tol, max_iter, beta, windows
///   [montecarlo]   n_paths, seed
///   [output]       dir
///   [compare]      driver1_kind, driver1_params, driver1_lipschitz, g1,
///                  driver_bar_kind, driver_bar_params, driver_bar_lipschitz, g_bar
///
/// with `key = value` lines and `#` comments. Functions are written as a
/// registry name followed by parameters, e.g. `linear 0 1`.
struct RunConfig {
    ModelSpec model;
    GridParams grid;
    PicardOptions solver;
    MonteCarloParams montecarlo;
    std::string out_dir = "out";
    std::optional<CompareSpec> compare;

    TimeGrid time_grid() const { return TimeGrid(model.horizon(), grid.n_steps); }
    SpaceParams space() const { return {grid.n_space, grid.x_span}; }

    bool operator==(const RunConfig& o) const {
        return model.coefficients == o.model.coefficients && model.delays == o.model.delays &&
               model.driver == o.model.driver && model.terminal == o.model.terminal && model.T == o.model.T &&
               grid == o.grid && solver.tol == o.solver.tol && solver.max_iter == o.solver.max_iter &&
               solver.beta == o.solver.beta && solver.windows == o.solver.windows && montecarlo == o.montecarlo &&
               out_dir == o.out_dir && compare == o.compare;
    }
};

namespace detail {

using Section = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::map<std::string, Section> parse_ini(std::istream& in) {
    std::map<std::string, Section> out;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(std::string_view(s).substr(1, s.size() - 2));
            if (out.count(section)) throw ConfigError("duplicate section [" + section + "]");
            out[section];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos || section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value inside a section");
        const std::string key = trim(std::string_view(s).substr(0, eq));
        if (out[section].count(key)) throw ConfigError("duplicate key " + section + "." + key);
        out[section][key] = trim(std::string_view(s).substr(eq + 1));
    }
    return out;
}

class Reader {
public:
    Reader(std::map<std::string, Section> ini) : ini_(std::move(ini)) {
        static const std::map<std::string, std::vector<std::string>> schema = {
            {"coefficients", {"hurst", "eta0", "b", "sigma"}},
            {"delays", {"K", "L", "delta", "zeta"}},
            {"driver", {"kind", "params", "lipschitz"}},
            {"terminal", {"g", "h", "degree"}},
            {"grid", {"T", "n_steps", "n_space", "x_span"}},
            {"solver", {"tol", "max_iter", "beta", "windows"}},
            {"montecarlo", {"n_paths", "seed"}},
            {"output", {"dir"}},
            {"compare",
             {"driver1_kind", "driver1_params", "driver1_lipschitz", "g1", "driver_bar_kind", "driver_bar_params",
              "driver_bar_lipschitz", "g_bar"}}};
        for (const auto& [name, keys] : ini_) {
            const auto it = schema.find(name);
            if (it == schema.end()) throw ConfigError("unknown section [" + name + "]");
            for (const auto& [key, value] : keys) {
                if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                    throw ConfigError("unknown key " + name + "." + key);
            }
        }
    }

    bool has_section(const std::string& s) const { return ini_.count(s) > 0; }

    std::optional<std::string> get(const std::string& s, const std::string& k) const {
        const auto it = ini_.find(s);
        if (it == ini_.end()) return std::nullopt;
        const auto jt = it->second.find(k);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
    }
    std::string require(const std::string& s, const std::string& k) const {
        auto v = get(s, k);
        if (!v) throw ConfigError("missing required key " + s + "." + k);
        return *v;
    }
    double number(const std::string& s, const std::string& k, double fallback) const {
        auto v = get(s, k);
        return v ? parse_double(*v) : fallback;
    }
    std::size_t count(const std::string& s, const std::string& k, std::size_t fallback) const {
        auto v = get(s, k);
        return v ? std::size_t(parse_u64(*v)) : fallback;
    }
    ScalarFunction function(const std::string& s, const std::string& k, const ScalarFunction& fallback) const {
        auto v = get(s, k);
        return v ? ScalarFunction::parse(*v) : fallback;
    }

private:
    std::map<std::string, Section> ini_;
};

inline std::vector<double> parse_numbers(const std::string& text) {
    std::istringstream in(text);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(parse_double(tok));
    return out;
}

inline DriverSpec read_driver(const Reader& r, const std::string& s, const std::string& prefix) {
    return DriverSpec(r.require(s, prefix + "kind"), parse_numbers(r.require(s, prefix + "params")),
                      parse_double(r.require(s, prefix + "lipschitz")));
}

inline void require_positive(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    const detail::Reader r(detail::parse_ini(in));
    RunConfig c;
    auto& co = c.model.coefficients;
    co.hurst = r.number("coefficients", "hurst", co.hurst);
    co.eta0 = r.number("coefficients", "eta0", co.eta0);
    co.b = r.function("coefficients", "b", co.b);
    co.sigma = r.function("coefficients", "sigma", co.sigma);
    auto& d = c.model.delays;
    d.K = r.number("delays", "K", d.K);
    d.L = r.number("delays", "L", d.L);
    d.delta = r.function("delays", "delta", d.delta);
    d.zeta = r.function("delays", "zeta", d.zeta);
    if (r.has_section("driver")) c.model.driver = detail::read_driver(r, "driver", "");
    auto& t = c.model.terminal;
    t.g = r.function("terminal", "g", t.g);
    t.h = r.function("terminal", "h", t.h);
    t.degree = int(r.number("terminal", "degree", t.degree));
    c.model.T = r.number("grid", "T", c.model.T);
    c.grid.n_steps = r.count("grid", "n_steps", c.grid.n_steps);
    c.grid.n_space = r.count("grid", "n_space", c.grid.n_space);
    c.grid.x_span = r.number("grid", "x_span", c.grid.x_span);
    c.solver.tol = r.number("solver", "tol", c.solver.tol);
    c.solver.max_iter = r.count("solver", "max_iter", c.solver.max_iter);
    c.solver.beta = r.number("solver", "beta", c.solver.beta);
    c.solver.windows = r.count("solver", "windows", c.solver.windows);
    c.montecarlo.n_paths = r.count("montecarlo", "n_paths", c.montecarlo.n_paths);
    c.montecarlo.seed = parse_u64(r.require("montecarlo", "seed"));
    if (auto dir = r.get("output", "dir")) c.out_dir = *dir;
    if (r.has_section("compare")) {
        CompareSpec cs;
        cs.driver1 = detail::read_driver(r, "compare", "driver1_");
        cs.g1 = ScalarFunction::parse(r.require("compare", "g1"));
        cs.driver_bar = detail::read_driver(r, "compare", "driver_bar_");
        cs.g_bar = ScalarFunction::parse(r.require("compare", "g_bar"));
        c.compare = cs;
    }

    using detail::require_positive;
    require_positive(c.model.T > 0.0, "grid.T must be positive");
    require_positive(d.K >= 0.0, "delays.K must be nonnegative");
    require_positive(d.L >= 0.0, "delays.L must be nonnegative");
    require_positive(c.grid.n_steps > 0, "grid.n_steps must be positive");
    require_positive(c.grid.n_space >= 4, "grid.n_space must be at least 4");
    require_positive(c.grid.x_span > 0.0, "grid.x_span must be positive");
    require_positive(c.solver.tol > 0.0, "solver.tol must be positive");
    require_positive(c.solver.max_iter > 0, "solver.max_iter must be positive");
    require_positive(c.solver.beta > 1.0, "solver.beta must exceed 1");
    require_positive(c.montecarlo.n_paths > 0, "montecarlo.n_paths must be positive");
    require_positive(t.degree >= 0, "terminal.degree must be nonnegative");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Canonical text form; parse_config(serialize_config(c)) == c and the text
/// is a fixed point of the round trip.
inline std::string serialize_config(const RunConfig& c) {
    if (!c.model.driver.serializable()) throw ConfigError("custom drivers cannot be serialized");
    std::ostringstream o;
    auto num = [](double v) { return format_double(v); };
    const auto& co = c.model.coefficients;
    const auto& d = c.model.delays;
    const auto& t = c.model.terminal;
    o << "[coefficients]\nhurst = " << num(co.hurst) << "\neta0 = " << num(co.eta0) << "\nb = " << co.b.to_string()
      << "\nsigma = " << co.sigma.to_string() << "\n\n";
    o << "[delays]\nK = " << num(d.K) << "\nL = " << num(d.L) << "\ndelta = " << d.delta.to_string()
      << "\nzeta = " << d.zeta.to_string() << "\n\n";
    o << "[driver]\nkind = " << c.model.driver.kind() << "\nparams = " << c.model.driver.params_string()
      << "\nlipschitz = " << num(c.model.driver.lipschitz()) << "\n\n";
    o << "[terminal]\ng = " << t.g.to_string() << "\nh = " << t.h.to_string() << "\ndegree = " << t.degree << "\n\n";
    o << "[grid]\nT = " << num(c.model.T) << "\nn_steps = " << c.grid.n_steps << "\nn_space = " << c.grid.n_space
      << "\nx_span = " << num(c.grid.x_span) << "\n\n";
    o << "[solver]\ntol = " << num(c.solver.tol) << "\nmax_iter = " << c.solver.max_iter
      << "\nbeta = " << num(c.solver.beta) << "\nwindows = " << c.solver.windows << "\n\n";
    o << "[montecarlo]\nn_paths = " << c.montecarlo.n_paths << "\nseed = " << c.montecarlo.seed << "\n\n";
    o << "[output]\ndir = " << c.out_dir << "\n";
    if (c.compare) {
        const auto& cs = *c.compare;
        o << "\n[compare]\ndriver1_kind = " << cs.driver1.kind() << "\ndriver1_params = " << cs.driver1.params_string()
          << "\ndriver1_lipschitz = " << num(cs.driver1.lipschitz()) << "\ng1 = " << cs.g1.to_string()
          << "\ndriver_bar_kind = " << cs.driver_bar.kind() << "\ndriver_bar_params = " << cs.driver_bar.params_string()
          << "\ndriver_bar_lipschitz = " << num(cs.driver_bar.lipschitz()) << "\ng_bar = " << cs.g_bar.to_string()
          << "\n";
    }
    return o.str();
}

/// Model 1 and the middle model of a comparison setup.
inline ModelSpec compare_model1(const RunConfig& c) {
    if (!c.compare) throw ConfigError("config has no [compare] section");
    ModelSpec m = c.model;
    m.driver = c.compare->driver1;
    m.terminal.g = c.compare->g1;
    return m;
}

}  // namespace fbsde
