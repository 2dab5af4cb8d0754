// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/fbm.hpp"
#include "fbsde/format.hpp"
#include "fbsde/frac_calc.hpp"
#include "fbsde/functions.hpp"
#include "fbsde/grid.hpp"
#include "fbsde/quadrature.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

/// Forward process eta_t = eta0 + int_0^t b ds + int_0^t sigma dB^H.
struct CoefficientSet {
    double hurst = 0.75;
    double eta0 = 0.0;
    ScalarFunction b = ScalarFunction::constant(0.0);
    ScalarFunction sigma = ScalarFunction::constant(1.0);

    bool operator==(const CoefficientSet&) const = default;
};

/// Anticipation delays on [0, T] and the extension horizon K.
struct DelaySpec {
    double K = 0.0;
    double L = 1.0;
    ScalarFunction delta = ScalarFunction::constant(0.0);
    ScalarFunction zeta = ScalarFunction::constant(0.0);

    bool operator==(const DelaySpec&) const = default;
};

/// Arguments of the driver. ay and az are the conditional expectations of
/// Y_{t+delta(t)} and Z_{t+zeta(t)} given the present.
struct DriverArgs {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double ay = 0.0;
    double az = 0.0;
};

/// Driver f(t, x, y, z, ay, az) with a declared Lipschitz constant.
///
/// Built-in kinds, each with parameters (c0, cx, cy, cz, cay, caz):
///   linear:  c0 + cx x + cy y + cz z + cay ay + caz az
///   tanh:    c0 + cx x + cy tanh(y) + cz tanh(z) + cay tanh(ay) + caz tanh(az)
/// A custom callable can be supplied through the constructor; the usage flags
/// then tell the solver which anticipated arguments it needs.
class DriverSpec {
public:
    using Fn = std::function<double(const DriverArgs&)>;

    DriverSpec() : DriverSpec("linear", {0, 0, 0, 0, 0, 0}, 0.0) {}

    DriverSpec(std::string kind, std::vector<double> params, double lipschitz)
        : kind_(std::move(kind)), params_(std::move(params)), lipschitz_(lipschitz) {
        if (params_.size() != 6)
            throw ConfigError("driver '" + kind_ + "' takes 6 parameters: c0 cx cy cz cay caz");
        if (!(lipschitz_ >= 0.0)) throw ConfigError("driver lipschitz constant must be >= 0");
        const auto c = params_;
        if (kind_ == "linear") {
            fn_ = [c](const DriverArgs& a) {
                return c[0] + c[1] * a.x + c[2] * a.y + c[3] * a.z + c[4] * a.ay + c[5] * a.az;
            };
        } else if (kind_ == "tanh") {
            fn_ = [c](const DriverArgs& a) {
                return c[0] + c[1] * a.x + c[2] * std::tanh(a.y) + c[3] * std::tanh(a.z) +
                       c[4] * std::tanh(a.ay) + c[5] * std::tanh(a.az);
            };
        } else {
            throw ConfigError("unknown driver kind '" + kind_ + "' (expected linear or tanh)");
        }
        uses_ay_ = c[4] != 0.0;
        uses_az_ = c[5] != 0.0;
    }

    DriverSpec(Fn fn, double lipschitz, bool uses_ay, bool uses_az, std::string label = "custom")
        : kind_(std::move(label)), fn_(std::move(fn)), lipschitz_(lipschitz), uses_ay_(uses_ay),
          uses_az_(uses_az) {}

    /// Linear driver with the smallest valid Lipschitz constant.
    static DriverSpec linear(double c0, double cx, double cy, double cz, double cay, double caz) {
        const double lip = std::max({std::abs(cy), std::abs(cz), std::abs(cay), std::abs(caz)});
        return {"linear", {c0, cx, cy, cz, cay, caz}, lip};
    }

    double operator()(const DriverArgs& a) const { return fn_(a); }
    double f0(double t, double x) const { return fn_({t, x, 0.0, 0.0, 0.0, 0.0}); }

    const std::string& kind() const noexcept { return kind_; }
    const std::vector<double>& params() const noexcept { return params_; }
    double lipschitz() const noexcept { return lipschitz_; }
    bool uses_ay() const noexcept { return uses_ay_; }
    bool uses_az() const noexcept { return uses_az_; }
    bool serializable() const noexcept { return params_.size() == 6; }

    std::string params_string() const {
        std::string s;
        for (std::size_t i = 0; i < params_.size(); ++i) s += (i ? " " : "") + format_double(params_[i]);
        return s;
    }

    bool operator==(const DriverSpec& o) const {
        return serializable() && o.serializable() && kind_ == o.kind_ && params_ == o.params_ &&
               lipschitz_ == o.lipschitz_;
    }

private:
    std::string kind_;
    std::vector<double> params_;
    Fn fn_;
    double lipschitz_ = 0.0;
    bool uses_ay_ = false;
    bool uses_az_ = false;
};

/// Terminal fields on [T, T+K] and their declared polynomial growth degree.
struct TerminalData {
    ScalarFunction g = ScalarFunction::constant(0.0);
    ScalarFunction h = ScalarFunction::constant(0.0);
    int degree = 1;

    bool operator==(const TerminalData&) const = default;
};

struct ModelSpec {
    CoefficientSet coefficients;
    DelaySpec delays;
    DriverSpec driver;
    TerminalData terminal;
    double T = 1.0;

    double horizon() const noexcept { return T + delays.K; }
};

/// sigma and b sampled on the grid.
inline std::vector<double> sample_on(const TimeGrid& grid, const ScalarFunction& fn) {
    std::vector<double> out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out[k] = fn(grid.time(k));
    return out;
}

inline KernelTable build_kernel_table(const ModelSpec& model, const TimeGrid& grid) {
    return build_kernel_table(grid, sample_on(grid, model.coefficients.sigma), model.coefficients.hurst);
}

/// Gaussian law of eta at every node: mean (trapezoid drift integral) and
/// variance ||sigma||^2_t.
struct Marginals {
    std::vector<double> mean;
    std::vector<double> variance;
};

inline std::vector<double> drift_integral(const TimeGrid& grid, const ScalarFunction& b) {
    std::vector<double> out(grid.size(), 0.0);
    const double h = grid.dt();
    for (std::size_t k = 1; k < grid.size(); ++k)
        out[k] = out[k - 1] + 0.5 * h * (b(grid.time(k - 1)) + b(grid.time(k)));
    return out;
}

inline Marginals eta_marginals(const ModelSpec& model, const KernelTable& table) {
    Marginals m;
    m.mean = drift_integral(table.grid, model.coefficients.b);
    for (double& v : m.mean) v += model.coefficients.eta0;
    m.variance = table.sigma_norm_sq;
    return m;
}

/// (mean, variance) of eta_t; linear interpolation between nodes.
inline std::pair<double, double> eta_marginal(const ModelSpec& model, const KernelTable& table,
                                              double t) {
    const TimeGrid& grid = table.grid;
    if (!(t >= 0.0) || t > grid.t_end() * (1.0 + 1e-12))
        throw DomainError("eta_marginal: t=" + format_double(t) + " outside [0, " +
                          format_double(grid.t_end()) + "]");
    const Marginals m = eta_marginals(model, table);
    const double pos = std::min(t / grid.dt(), double(grid.n_steps()));
    const auto k = std::min(std::size_t(pos), grid.n_steps() - 1);
    const double w = pos - double(k);
    return {(1.0 - w) * m.mean[k] + w * m.mean[k + 1],
            (1.0 - w) * m.variance[k] + w * m.variance[k + 1]};
}

/// eta along every path of the batch, left-point sum for the stochastic part.
inline PathSet eta_paths(const ModelSpec& model, const PathBatch& batch) {
    if (batch.hurst() != model.coefficients.hurst)
        throw DomainError("eta_paths: batch hurst " + format_double(batch.hurst()) +
                          " differs from model hurst " + format_double(model.coefficients.hurst));
    const TimeGrid& grid = batch.grid();
    const auto drift = drift_integral(grid, model.coefficients.b);
    const auto sigma = sample_on(grid, model.coefficients.sigma);
    PathSet out(grid, batch.n_paths());
    for (std::size_t p = 0; p < batch.n_paths(); ++p) {
        auto src = batch.path(p);
        auto dst = out.path(p);
        double noise = 0.0;
        dst[0] = model.coefficients.eta0;
        for (std::size_t k = 1; k < grid.size(); ++k) {
            noise += sigma[k - 1] * (src[k] - src[k - 1]);
            dst[k] = model.coefficients.eta0 + drift[k] + noise;
        }
    }
    return out;
}

/// Node reached from node k by the delay, t_k + d(t_k) rounded to the grid.
inline std::vector<std::size_t> delay_targets(const TimeGrid& grid, std::size_t k_end,
                                              const ScalarFunction& delay) {
    std::vector<std::size_t> out(k_end + 1);
    for (std::size_t k = 0; k <= k_end; ++k) {
        const double t = grid.time(k);
        out[k] = std::max(k, grid.nearest_index(t + delay(t)));
    }
    return out;
}

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<Check> checks;
    double max_delay_rounding = 0.0;
    double ratio_bound = 0.0;

    bool ok() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    const Check* first_failure() const {
        for (const auto& c : checks)
            if (!c.passed) return &c;
        return nullptr;
    }
};

inline void write_csv(std::ostream& os, const ValidationReport& report) {
    os << "check,passed,detail\n";
    for (const auto& c : report.checks) os << c.name << ',' << (c.passed ? 1 : 0) << ",\"" << c.detail << "\"\n";
}

namespace detail {

// Integral of fn over [a, b], composite 20-point Gauss-Legendre on `panels`.
template <class F>
double integrate(F&& fn, double a, double b, std::size_t panels) {
    if (!(b > a)) return 0.0;
    const auto& rule = gauss_legendre_unit();
    const double h = (b - a) / double(panels);
    double s = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        double cell = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q)
            cell += rule.weights[q] * fn(a + h * (double(p) + rule.nodes[q]));
        s += h * cell;
    }
    return s;
}

// Condition (i) and (ii) for one delay function.
inline void check_delay(const char* label, const ScalarFunction& delay, const ModelSpec& model,
                        const TimeGrid& grid, std::size_t k_T, ValidationReport& report) {
    const double T = model.T, end = model.horizon(), L = model.delays.L;
    std::string bad;
    for (std::size_t k = 0; k <= k_T && bad.empty(); ++k) {
        const double t = grid.time(k), d = delay(t);
        if (!(d >= 0.0))
            bad = std::string(label) + "(" + format_double(t) + ") = " + format_double(d) + " < 0";
        else if (t + d > end * (1.0 + 1e-12))
            bad = "t + " + std::string(label) + "(t) = " + format_double(t + d) + " > T+K = " +
                  format_double(end) + " at t = " + format_double(t);
        const double rounding = std::abs(grid.time(grid.nearest_index(t + d)) - (t + d));
        report.max_delay_rounding = std::max(report.max_delay_rounding, rounding);
    }
    report.checks.push_back({std::string("condition_i_") + label, bad.empty(),
                             bad.empty() ? "t + " + std::string(label) + "(t) <= T+K on all nodes" : bad});
    if (!bad.empty()) {
        report.checks.push_back({std::string("condition_ii_") + label, false, "skipped: condition (i) fails"});
        return;
    }

    // Nonnegative integrand corpus: 1, s, s^2, e^s and smoothed indicators.
    std::vector<std::function<double(double)>> corpus = {
        [](double) { return 1.0; }, [](double s) { return s; }, [](double s) { return s * s; },
        [](double s) { return std::exp(s); }};
    const double width = end / 200.0;
    for (int j = 0; j < 8; ++j) {
        const double c = end * (double(j) + 0.5) / 8.0, r = end / 16.0;
        corpus.push_back([c, r, width](double s) {
            return 1.0 / (1.0 + std::exp((std::abs(s - c) - r) / width));
        });
    }
    const std::size_t panels = 400;
    std::string fail;
    for (std::size_t m = 0; m < corpus.size() && fail.empty(); ++m) {
        const auto& fn = corpus[m];
        for (int i = 0; i <= 20 && fail.empty(); ++i) {
            const double t = T * double(i) / 20.0;
            const double lhs = integrate([&](double s) { return fn(s + delay(s)); }, t, T, panels);
            const double rhs = L * integrate(fn, t, end, panels);
            if (lhs > rhs * (1.0 + 1e-7) + 1e-10)
                fail = "corpus member " + std::to_string(m) + " at t = " + format_double(t) +
                       ": " + format_double(lhs) + " > L * " + format_double(rhs / std::max(L, 1e-300));
        }
    }
    report.checks.push_back({std::string("condition_ii_") + label, fail.empty(),
                             fail.empty() ? "holds with L = " + format_double(L) + " on " +
                                                std::to_string(corpus.size()) + " integrands"
                                          : fail});
}

}  // namespace detail

/// Checks the delay conditions, sigma, the declared Lipschitz constant, the
/// terminal growth class and finiteness of the weighted terminal integrals.
/// Never throws on model defects; they are reported as failed checks.
inline ValidationReport validate(const ModelSpec& model, const TimeGrid& grid, double beta = 2.0) {
    ValidationReport report;
    const auto& co = model.coefficients;
    const bool hurst_ok = co.hurst > 0.5 && co.hurst < 1.0;
    report.checks.push_back({"hurst", hurst_ok, "H = " + format_double(co.hurst)});

    bool grid_ok = model.T > 0.0 && model.delays.K >= 0.0 &&
                   std::abs(grid.t_end() - model.horizon()) <= 1e-12 * model.horizon();
    std::size_t k_T = 0;
    if (grid_ok) {
        try {
            k_T = grid.node_index(model.T);
        } catch (const DomainError&) {
            grid_ok = false;
        }
    }
    report.checks.push_back({"grid", grid_ok,
                             grid_ok ? "grid covers [0, T+K] with T a node"
                                     : "grid must span [0, T+K] = [0, " + format_double(model.horizon()) +
                                           "] and contain T = " + format_double(model.T) + " as a node"});
    if (!grid_ok || !hurst_ok) return report;

    detail::check_delay("delta", model.delays.delta, model, grid, k_T, report);
    detail::check_delay("zeta", model.delays.zeta, model, grid, k_T, report);
    report.checks.push_back({"delay_rounding", report.max_delay_rounding <= 0.5 * grid.dt() * (1 + 1e-9),
                             "max rounding of delay images " + format_double(report.max_delay_rounding)});

    bool finite = true;
    for (std::size_t k = 0; k < grid.size(); ++k)
        finite = finite && std::isfinite(co.b(grid.time(k))) && std::isfinite(co.sigma(grid.time(k)));
    report.checks.push_back({"coefficients_finite", finite, "b and sigma finite on the grid"});

    std::optional<KernelTable> table;
    try {
        table = build_kernel_table(model, grid);
        report.ratio_bound = table->ratio_bound();
        report.checks.push_back({"sigma_sign", true,
                                 "sigma single-signed; measured M = " + format_double(report.ratio_bound)});
    } catch (const DomainError& e) {
        report.checks.push_back({"sigma_sign", false, e.what()});
    }

    // Lipschitz spot check on random tuple pairs.
    {
        CounterRng rng(0x5eedULL, 0);
        const double C = model.driver.lipschitz();
        std::string fail;
        auto draw = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
        for (int i = 0; i < 1000 && fail.empty(); ++i) {
            const double t = draw(0.0, model.T), x = draw(-5.0, 5.0);
            DriverArgs a{t, x, draw(-10, 10), draw(-10, 10), draw(-10, 10), draw(-10, 10)};
            DriverArgs b{t, x, draw(-10, 10), draw(-10, 10), draw(-10, 10), draw(-10, 10)};
            const double lhs = std::abs(model.driver(a) - model.driver(b));
            const double rhs = C * (std::abs(a.y - b.y) + std::abs(a.z - b.z) + std::abs(a.ay - b.ay) +
                                    std::abs(a.az - b.az));
            if (!(lhs <= rhs * (1.0 + 1e-12) + 1e-12))
                fail = "|f - f'| = " + format_double(lhs) + " > C * sum|diff| = " + format_double(rhs);
        }
        report.checks.push_back({"lipschitz", fail.empty(),
                                 fail.empty() ? "C = " + format_double(C) + " holds on 1000 pairs" : fail});
    }

    const auto& term = model.terminal;
    const int dg = term.g.growth_degree(), dh = term.h.growth_degree();
    const bool growth = term.degree >= 0 && dg >= 0 && dh >= 0 && dg <= term.degree && dh <= term.degree;
    report.checks.push_back({"terminal_growth", growth,
                             "degrees g=" + std::to_string(dg) + " h=" + std::to_string(dh) +
                                 " declared " + std::to_string(term.degree)});

    if (table) {
        const Marginals m = eta_marginals(model, *table);
        const auto& gh = gauss_hermite_normal();
        double ig = 0.0, ih = 0.0;
        const double H = co.hurst;
        for (std::size_t k = k_T; k < grid.size(); ++k) {
            double eg = 0.0, eh = 0.0;
            const double sd = std::sqrt(m.variance[k]);
            for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
                const double x = m.mean[k] + sd * gh.nodes[q];
                eg += gh.weights[q] * term.g(x) * term.g(x);
                eh += gh.weights[q] * term.h(x) * term.h(x);
            }
            const double t = grid.time(k);
            const double w = (k == k_T || k + 1 == grid.size()) ? 0.5 : 1.0;
            ig += w * grid.dt() * std::exp(beta * t) * eg;
            ih += w * grid.dt() * std::exp(beta * t) * std::pow(t, 2.0 * H - 1.0) * eh;
        }
        const bool ok = std::isfinite(ig) && std::isfinite(ih);
        report.checks.push_back({"terminal_integrability", ok,
                                 "weighted integrals g: " + format_double(ig) + ", h: " + format_double(ih)});
    }
    return report;
}

}  // namespace fbsde
