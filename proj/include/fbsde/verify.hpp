// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/fbm.hpp"
#include "fbsde/field.hpp"
#include "fbsde/format.hpp"
#include "fbsde/frac_calc.hpp"
#include "fbsde/functions.hpp"
#include "fbsde/model.hpp"
#include "fbsde/quadrature.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

/// One line of a verdict file.
struct Verdict {
    std::string test;
    std::string metric;
    double target = 0.0;
    double tolerance = 0.0;
    double value = 0.0;
    bool pass = false;
};

inline void write_verdicts(std::ostream& os, std::span<const Verdict> verdicts) {
    os << "test,metric,target,tolerance,value,pass\n";
    for (const auto& v : verdicts)
        os << v.test << ',' << v.metric << ',' << format_double(v.target) << ',' << format_double(v.tolerance)
           << ',' << format_double(v.value) << ',' << (v.pass ? 1 : 0) << '\n';
}

struct SampleStats {
    double mean = 0.0;
    double variance = 0.0;
    double se = 0.0;  // standard error of the mean
};

inline SampleStats sample_stats(std::span<const double> v) {
    SampleStats s;
    const double n = double(v.size());
    s.mean = pairwise_sum(v) / n;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - s.mean) * (v[i] - s.mean);
    s.variance = v.size() > 1 ? pairwise_sum(sq) / (n - 1.0) : 0.0;
    s.se = std::sqrt(s.variance / n);
    return s;
}

/// Least-squares slope of log(residual) against log(dt).
inline double fit_order(std::span<const double> dt, std::span<const double> residual) {
    const std::size_t n = dt.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(dt[i]);
        my += std::log(residual[i]);
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(dt[i]) - mx;
        sxy += dx * (std::log(residual[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

// ---------------------------------------------------------------- moments

struct MomentResult {
    std::string name;
    double mean = 0.0;
    double se = 0.0;
    double variance = 0.0;
    double target_variance = 0.0;
    bool mean_ok = false;
    bool variance_ok = false;
    bool pass() const { return mean_ok && variance_ok; }
};

struct MomentReport {
    std::vector<MomentResult> results;
    bool pass() const {
        return std::all_of(results.begin(), results.end(), [](const MomentResult& r) { return r.pass(); });
    }
};

struct NamedIntegrand {
    std::string name;
    ScalarFunction fn;
};

inline std::vector<NamedIntegrand> default_integrand_corpus() {
    return {{"one", ScalarFunction::constant(1.0)},
            {"s", ScalarFunction::linear(0.0, 1.0)},
            {"s2", ScalarFunction::polynomial({0.0, 0.0, 1.0})},
            {"exp_neg_s", ScalarFunction::exponential(1.0, -1.0)},
            {"one_minus_s_sq", ScalarFunction::polynomial({1.0, -2.0, 1.0})}};
}

/// Zero mean within n_se standard errors and variance within rel_tol of
/// ||F||_T^2 for each deterministic integrand.
inline MomentReport integral_moment_suite(const PathBatch& batch, const std::vector<NamedIntegrand>& corpus,
                                          double n_se = 3.0, double rel_tol = 0.05) {
    MomentReport rep;
    const TimeGrid& grid = batch.grid();
    const InnerProduct ip(grid, batch.hurst());
    std::vector<double> vals(batch.n_paths());
    for (const auto& item : corpus) {
        const auto f = sample_on(grid, item.fn);
        for (std::size_t p = 0; p < batch.n_paths(); ++p)
            vals[p] = divergence_integral_deterministic(f, batch.path(p));
        const SampleStats s = sample_stats(vals);
        MomentResult r{item.name, s.mean, s.se, s.variance, ip(f, f, grid.n_steps()), false, false};
        r.mean_ok = std::abs(s.mean) <= n_se * s.se || (s.se == 0.0 && s.mean == 0.0);
        r.variance_ok = r.target_variance == 0.0 ? s.variance == 0.0
                                                 : std::abs(s.variance - r.target_variance) <= rel_tol * r.target_variance;
        rep.results.push_back(r);
    }
    return rep;
}

inline void write_csv(std::ostream& os, const MomentReport& rep) {
    os << "integrand,mean,se,variance,target_variance,pass\n";
    for (const auto& r : rep.results)
        os << r.name << ',' << format_double(r.mean) << ',' << format_double(r.se) << ','
           << format_double(r.variance) << ',' << format_double(r.target_variance) << ',' << (r.pass() ? 1 : 0)
           << '\n';
}

// -------------------------------------------------------------- residuals

/// Refinement study of a residual.
struct ResidualReport {
    std::string name;
    std::vector<std::size_t> n_steps;
    std::vector<double> dt;
    /// Ensemble mean of |accumulated residual| per grid.
    std::vector<double> residual;
    /// Ensemble mean of the signed accumulated residual and its standard error.
    std::vector<double> signed_mean;
    std::vector<double> signed_se;
    /// Ensemble mean of the sum of absolute one-step residuals.
    std::vector<double> step_abs;
    double order = 0.0;
    double threshold = 0.8;
    bool exact = false;
    bool pass = false;
    /// Ensemble mean of the left side at the final time on the finest grid.
    double final_mean = 0.0;
    double final_se = 0.0;
    /// Extra diagnostic (product rule: mean residual of the printed form).
    std::optional<double> diagnostic;

    void finish(double floor) {
        exact = std::all_of(residual.begin(), residual.end(), [&](double r) { return r <= floor; });
        const bool positive = std::all_of(residual.begin(), residual.end(), [](double r) { return r > 0.0; });
        order = exact || !positive ? std::numeric_limits<double>::quiet_NaN() : fit_order(dt, residual);
        pass = exact || (positive && order >= threshold);
    }
};

inline void write_csv(std::ostream& os, const ResidualReport& rep) {
    os << "name,n_steps,dt,residual,signed_mean,signed_se,step_abs\n";
    for (std::size_t i = 0; i < rep.dt.size(); ++i)
        os << rep.name << ',' << rep.n_steps[i] << ',' << format_double(rep.dt[i]) << ','
           << format_double(rep.residual[i]) << ',' << format_double(rep.signed_mean[i]) << ','
           << format_double(rep.signed_se[i]) << ',' << format_double(rep.step_abs[i]) << '\n';
}

/// C^{1,2} test function with its partial derivatives.
struct TestFunction {
    std::string name;
    std::function<double(double, double)> F, Ft, Fx, Fxx;
};

inline const std::vector<TestFunction>& test_function_registry() {
    static const std::vector<TestFunction> reg = {
        {"x", [](double, double x) { return x; }, [](double, double) { return 0.0; },
         [](double, double) { return 1.0; }, [](double, double) { return 0.0; }},
        {"x^2", [](double, double x) { return x * x; }, [](double, double) { return 0.0; },
         [](double, double x) { return 2.0 * x; }, [](double, double) { return 2.0; }},
        {"t*x", [](double t, double x) { return t * x; }, [](double, double x) { return x; },
         [](double t, double) { return t; }, [](double, double) { return 0.0; }},
        {"t*x^2", [](double t, double x) { return t * x * x; }, [](double, double x) { return x * x; },
         [](double t, double x) { return 2.0 * t * x; }, [](double t, double) { return 2.0 * t; }},
        {"x^3", [](double, double x) { return x * x * x; }, [](double, double) { return 0.0; },
         [](double, double x) { return 3.0 * x * x; }, [](double, double x) { return 6.0 * x; }},
        {"exp(x/2)", [](double, double x) { return std::exp(0.5 * x); }, [](double, double) { return 0.0; },
         [](double, double x) { return 0.5 * std::exp(0.5 * x); },
         [](double, double x) { return 0.25 * std::exp(0.5 * x); }},
        {"sin(x)", [](double, double x) { return std::sin(x); }, [](double, double) { return 0.0; },
         [](double, double x) { return std::cos(x); }, [](double, double x) { return -std::sin(x); }},
    };
    return reg;
}

inline const TestFunction& find_test_function(const std::string& name) {
    for (const auto& f : test_function_registry())
        if (f.name == name) return f;
    throw DomainError("test function '" + name + "' is not registered");
}

/// X_t = x0 + int_0^t g ds + int_0^t f dB^H with deterministic g, f.
struct ProcessSpec {
    double x0 = 0.0;
    ScalarFunction g = ScalarFunction::constant(0.0);
    ScalarFunction f = ScalarFunction::constant(1.0);
};

namespace detail {

// Discretized process on one grid: trapezoid drift increments, left-point
// stochastic sum, and the covariances Cov(X_k - x0, dB_k).
struct DiscreteProcess {
    std::vector<double> f, g, drift_inc, wick, norm_sq, hat;
};

inline DiscreteProcess discretize(const ProcessSpec& spec, const TimeGrid& grid, double hurst) {
    DiscreteProcess d;
    d.f = sample_on(grid, spec.f);
    d.g = sample_on(grid, spec.g);
    const std::size_t n = grid.n_steps();
    d.drift_inc.resize(n);
    for (std::size_t k = 0; k < n; ++k) d.drift_inc[k] = 0.5 * grid.dt() * (d.g[k] + d.g[k + 1]);
    std::vector<double> gamma(n);
    for (std::size_t l = 0; l < n; ++l) gamma[l] = fgn_autocovariance(l, hurst) * std::pow(grid.dt(), 2.0 * hurst);
    d.wick.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < k; ++j) d.wick[k] += d.f[j] * gamma[k - j];
    d.norm_sq = InnerProduct(grid, hurst).profile(d.f, d.f);
    d.hat = hat_transform(grid, d.f, hurst);
    return d;
}

inline void build_path(const ProcessSpec& spec, const DiscreteProcess& d, std::span<const double> b,
                       std::vector<double>& x) {
    x.resize(b.size());
    x[0] = spec.x0;
    for (std::size_t k = 0; k + 1 < b.size(); ++k) x[k + 1] = x[k] + d.drift_inc[k] + d.f[k] * (b[k + 1] - b[k]);
}

inline double residual_floor(double scale) { return 1e-11 * (1.0 + scale); }

}  // namespace detail

/// Itô formula residual F(t, X_t) - F(0, X_0) - [int F_t ds + int F_x dX
/// + 1/2 int F_xx d||f||^2], the stochastic integral as a discrete Skorohod
/// sum (left-point sum minus its Wick correction). Studied on the batch grid
/// coarsened by each factor.
inline ResidualReport ito_residual(const std::string& F_name, const ProcessSpec& spec, const PathBatch& batch,
                                   std::vector<std::size_t> factors = {4, 2, 1}, double threshold = 0.8) {
    const TestFunction& F = find_test_function(F_name);
    ResidualReport rep;
    rep.name = "ito:" + F_name;
    rep.threshold = threshold;
    double scale = 0.0;
    std::vector<double> acc(batch.n_paths()), signed_vals(batch.n_paths()), steps(batch.n_paths()), x;
    for (std::size_t factor : factors) {
        const PathBatch b = batch.coarsened(factor);
        const TimeGrid& grid = b.grid();
        const auto d = detail::discretize(spec, grid, b.hurst());
        const double dt = grid.dt();
        std::vector<double> finals(b.n_paths());
        for (std::size_t p = 0; p < b.n_paths(); ++p) {
            auto path = b.path(p);
            detail::build_path(spec, d, path, x);
            double total = 0.0, abs_sum = 0.0;
            for (std::size_t k = 0; k < grid.n_steps(); ++k) {
                const double t = grid.time(k), t1 = grid.time(k + 1);
                const double fx = F.Fx(t, x[k]), fxx = F.Fxx(t, x[k]);
                const double rhs = F.Ft(t, x[k]) * dt + fx * d.drift_inc[k] +
                                   fx * d.f[k] * (path[k + 1] - path[k]) - fxx * d.f[k] * d.wick[k] +
                                   0.5 * fxx * (d.norm_sq[k + 1] - d.norm_sq[k]);
                const double r = F.F(t1, x[k + 1]) - F.F(t, x[k]) - rhs;
                total += r;
                abs_sum += std::abs(r);
            }
            finals[p] = F.F(grid.t_end(), x.back());
            signed_vals[p] = total;
            acc[p] = std::abs(total);
            steps[p] = abs_sum;
        }
        const SampleStats s = sample_stats(signed_vals);
        rep.n_steps.push_back(grid.n_steps());
        rep.dt.push_back(dt);
        rep.residual.push_back(pairwise_sum(acc) / double(acc.size()));
        rep.signed_mean.push_back(s.mean);
        rep.signed_se.push_back(s.se);
        rep.step_abs.push_back(pairwise_sum(steps) / double(steps.size()));
        const SampleStats fs = sample_stats(finals);
        rep.final_mean = fs.mean;
        rep.final_se = fs.se;
        scale = std::max(scale, std::abs(fs.mean) + std::sqrt(fs.variance));
    }
    rep.finish(detail::residual_floor(scale));
    return rep;
}

/// Product rule residual X1 X2 - [int X1 g2 + int X2 g1 + int X1 f2 dB
/// + int X2 f1 dB + int (f1_hat f2 + f2_hat f1) ds], with f_hat the
/// phi-transform of f. When the correction integrals use g in place of f the
/// identity fails already for X1 = X2 = B; the mean residual of that form is
/// kept as a diagnostic.
inline ResidualReport product_rule_residual(const ProcessSpec& s1, const ProcessSpec& s2, const PathBatch& batch,
                                            std::vector<std::size_t> factors = {4, 2, 1},
                                            double threshold = 0.8) {
    ResidualReport rep;
    rep.name = "product";
    rep.threshold = threshold;
    double scale = 0.0;
    std::vector<double> acc(batch.n_paths()), signed_vals(batch.n_paths()), steps(batch.n_paths());
    std::vector<double> printed(batch.n_paths()), x1, x2;
    for (std::size_t factor : factors) {
        const PathBatch b = batch.coarsened(factor);
        const TimeGrid& grid = b.grid();
        const auto d1 = detail::discretize(s1, grid, b.hurst());
        const auto d2 = detail::discretize(s2, grid, b.hurst());
        const double dt = grid.dt();
        const std::size_t n = grid.n_steps();
        std::vector<double> corr(n), corr_printed(n);
        for (std::size_t k = 0; k < n; ++k) {
            corr[k] = 0.5 * dt * (d1.hat[k] * d2.f[k] + d2.hat[k] * d1.f[k] + d1.hat[k + 1] * d2.f[k + 1] +
                                  d2.hat[k + 1] * d1.f[k + 1]);
            corr_printed[k] = 0.5 * dt * (d1.hat[k] * d2.g[k] + d2.hat[k] * d1.g[k] + d1.hat[k + 1] * d2.g[k + 1] +
                                          d2.hat[k + 1] * d1.g[k + 1]);
        }
        std::vector<double> finals(b.n_paths());
        for (std::size_t p = 0; p < b.n_paths(); ++p) {
            auto path = b.path(p);
            detail::build_path(s1, d1, path, x1);
            detail::build_path(s2, d2, path, x2);
            double total = 0.0, abs_sum = 0.0, printed_total = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double db = path[k + 1] - path[k];
                const double drift = 0.5 * dt * (x1[k] * d2.g[k] + x2[k] * d1.g[k] + x1[k + 1] * d2.g[k + 1] +
                                                 x2[k + 1] * d1.g[k + 1]);
                const double stoch = (x1[k] * d2.f[k] + x2[k] * d1.f[k]) * db - d2.f[k] * d1.wick[k] -
                                     d1.f[k] * d2.wick[k];
                const double lhs = x1[k + 1] * x2[k + 1] - x1[k] * x2[k];
                const double r = lhs - drift - stoch - corr[k];
                total += r;
                abs_sum += std::abs(r);
                printed_total += lhs - drift - stoch - corr_printed[k];
            }
            finals[p] = x1.back() * x2.back();
            signed_vals[p] = total;
            acc[p] = std::abs(total);
            steps[p] = abs_sum;
            printed[p] = printed_total;
        }
        const SampleStats s = sample_stats(signed_vals);
        rep.n_steps.push_back(n);
        rep.dt.push_back(dt);
        rep.residual.push_back(pairwise_sum(acc) / double(acc.size()));
        rep.signed_mean.push_back(s.mean);
        rep.signed_se.push_back(s.se);
        rep.step_abs.push_back(pairwise_sum(steps) / double(steps.size()));
        const SampleStats fs = sample_stats(finals);
        rep.final_mean = fs.mean;
        rep.final_se = fs.se;
        rep.diagnostic = sample_stats(printed).mean;
        scale = std::max(scale, std::abs(fs.mean) + std::sqrt(fs.variance));
    }
    rep.finish(detail::residual_floor(scale));
    return rep;
}

/// Pathwise residual statistics of a solved field on one grid.
struct BsdeResidualStats {
    double mean_abs = 0.0;     // mean |sum_k r_k|
    double signed_mean = 0.0;  // mean sum_k r_k
    double signed_se = 0.0;
    double step_abs = 0.0;     // mean sum_k |r_k|
    double scale = 0.0;        // mean |Y_0| + std of Y_T
};

/// r_k = Y_{k+1} - Y_k + f(...) dt - Z_k dB_k + z_x(t_k, eta_k) Cov(eta_k, dB_k)
/// along each path on [0, T]; the last term turns the forward sum of Z
/// into the divergence integral.
inline BsdeResidualStats bsde_residual(const BsdeSolver& solver, const SolutionField& field, const PathBatch& batch) {
    const TimeGrid& grid = solver.grid();
    if (!(batch.grid() == grid)) throw GridMismatch("bsde_residual: batch grid differs from the solution grid");
    if (!(field.time_grid() == grid) || !(field.space_grid() == solver.space()))
        throw GridMismatch("bsde_residual: field does not match the solver grids");
    const ModelSpec& model = solver.model();
    const SpaceGrid& space = solver.space();
    const std::size_t k_T = solver.k_T(), m = space.size();
    const double dt = grid.dt(), H = model.coefficients.hurst;
    const PathSet eta = eta_paths(model, batch);
    const auto sigma = sample_on(grid, model.coefficients.sigma);

    std::vector<double> gamma(k_T + 1);
    for (std::size_t l = 0; l <= k_T; ++l) gamma[l] = fgn_autocovariance(l, H) * std::pow(dt, 2.0 * H);
    std::vector<double> wick(k_T, 0.0);
    for (std::size_t k = 0; k < k_T; ++k)
        for (std::size_t j = 0; j < k; ++j) wick[k] += sigma[j] * gamma[k - j];

    std::vector<std::vector<double>> zx(k_T, std::vector<double>(m)), ay(k_T), az(k_T);
    for (std::size_t k = 0; k < k_T; ++k) {
        derivative(space, field.z(k), zx[k]);
        if (model.driver.uses_ay()) ay[k] = solver.anticipated_y(field, k);
        if (model.driver.uses_az()) az[k] = solver.anticipated_z(field, k);
    }

    std::vector<double> acc(batch.n_paths()), signed_vals(batch.n_paths()), steps(batch.n_paths());
    std::vector<double> y0(batch.n_paths()), yT(batch.n_paths());
    for (std::size_t p = 0; p < batch.n_paths(); ++p) {
        auto e = eta.path(p);
        auto b = batch.path(p);
        double total = 0.0, abs_sum = 0.0;
        double y = interpolate_cubic(space, field.u(0), e[0]);
        y0[p] = y;
        for (std::size_t k = 0; k < k_T; ++k) {
            const double x = e[k];
            const double z = interpolate_cubic(space, field.z(k), x);
            const double a_y = ay[k].empty() ? 0.0 : interpolate_cubic(space, ay[k], x);
            const double a_z = az[k].empty() ? 0.0 : interpolate_cubic(space, az[k], x);
            const double y1 = interpolate_cubic(space, field.u(k + 1), e[k + 1]);
            const double fv = model.driver({grid.time(k), x, y, z, a_y, a_z});
            const double r = y1 - y + fv * dt - z * (b[k + 1] - b[k]) + interpolate_cubic(space, zx[k], x) * wick[k];
            total += r;
            abs_sum += std::abs(r);
            y = y1;
        }
        yT[p] = y;
        signed_vals[p] = total;
        acc[p] = std::abs(total);
        steps[p] = abs_sum;
    }
    BsdeResidualStats st;
    const SampleStats s = sample_stats(signed_vals);
    st.mean_abs = pairwise_sum(acc) / double(acc.size());
    st.signed_mean = s.mean;
    st.signed_se = s.se;
    st.step_abs = pairwise_sum(steps) / double(steps.size());
    const SampleStats s0 = sample_stats(y0), sT = sample_stats(yT);
    st.scale = std::abs(s0.mean) + std::sqrt(sT.variance) + std::abs(sT.mean);
    return st;
}

/// Solves the model on n_steps, 2 n_steps, 4 n_steps and fits the order of
/// the residual statistic; paths are sampled on the finest grid and coarsened.
inline ResidualReport bsde_refinement(const ModelSpec& model, std::size_t n_steps, const SpaceParams& space,
                                      const PicardOptions& opt, std::size_t n_paths, std::uint64_t seed,
                                      double threshold = 0.8) {
    ResidualReport rep;
    rep.name = "bsde";
    rep.threshold = threshold;
    const TimeGrid fine(model.horizon(), 4 * n_steps);
    const PathBatch batch = sample_paths(fine, model.coefficients.hurst, n_paths, seed);
    double scale = 0.0;
    for (std::size_t factor : {4u, 2u, 1u}) {
        const TimeGrid grid = fine.coarsened(factor);
        const BsdeSolver solver(model, grid, space);
        const auto result = picard_solve(solver, opt);
        const BsdeResidualStats st = bsde_residual(solver, result.field, batch.coarsened(factor));
        rep.n_steps.push_back(grid.n_steps());
        rep.dt.push_back(grid.dt());
        rep.residual.push_back(st.mean_abs);
        rep.signed_mean.push_back(st.signed_mean);
        rep.signed_se.push_back(st.signed_se);
        rep.step_abs.push_back(st.step_abs);
        scale = std::max(scale, st.scale);
    }
    rep.finish(detail::residual_floor(scale));
    return rep;
}

// ----------------------------------------------------- space convergence

struct ConvergenceReport {
    std::vector<std::size_t> n_space;
    std::vector<double> dx;
    /// max |u_n - u_2n| over rows t <= T and the middle half of the domain,
    /// compared on the coarser nodes; one entry per consecutive pair.
    std::vector<double> difference;
    double order = 0.0;
    double threshold = 1.8;
    bool exact = false;
    bool pass = false;
};

inline void write_csv(std::ostream& os, const ConvergenceReport& rep) {
    os << "n_space,dx,difference_to_next,order\n";
    for (std::size_t i = 0; i < rep.n_space.size(); ++i) {
        os << rep.n_space[i] << ',' << format_double(rep.dx[i]) << ',';
        if (i < rep.difference.size()) os << format_double(rep.difference[i]);
        os << ',';
        if (i + 1 == rep.difference.size()) os << (rep.exact ? std::string("exact") : format_double(rep.order));
        os << '\n';
    }
}

/// Self-convergence in space on n, 2n, 4n intervals at fixed time grid.
inline ConvergenceReport space_convergence(const ModelSpec& model, const TimeGrid& grid, const SpaceParams& base,
                                           const PicardOptions& opt, double threshold = 1.8) {
    ConvergenceReport rep;
    rep.threshold = threshold;
    std::vector<SolutionField> fields;
    for (std::size_t f : {1u, 2u, 4u}) {
        const BsdeSolver solver(model, grid, {base.n_space * f, base.x_span});
        fields.push_back(picard_solve(solver, opt).field);
        rep.n_space.push_back(base.n_space * f);
        rep.dx.push_back(solver.space().dx());
    }
    double scale = 0.0;
    for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
        const SolutionField& a = fields[j];
        const SolutionField& b = fields[j + 1];
        const SpaceGrid& xs = a.space_grid();
        const double lo = xs.x_min() + 0.25 * (xs.x_max() - xs.x_min());
        const double hi = xs.x_max() - 0.25 * (xs.x_max() - xs.x_min());
        double diff = 0.0;
        for (std::size_t k = 0; k <= a.k_T(); ++k)
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (xs.x(i) < lo || xs.x(i) > hi) continue;
                diff = std::max(diff, std::abs(a.u(k, i) - b.u(k, 2 * i)));
                scale = std::max(scale, std::abs(a.u(k, i)));
            }
        rep.difference.push_back(diff);
    }
    const double floor = 1e-9 * (1.0 + scale);
    rep.exact = std::all_of(rep.difference.begin(), rep.difference.end(), [&](double d) { return d <= floor; });
    rep.order = rep.exact ? std::numeric_limits<double>::infinity() : std::log2(rep.difference[0] / rep.difference[1]);
    rep.pass = rep.exact || rep.order >= threshold;
    return rep;
}

// ------------------------------------------------------------ comparison

struct OrderingReport {
    bool applicable = true;
    std::string reason;
    /// min over all nodes of u2 - u1, u_bar - u1 and u2 - u_bar.
    double min_gap = 0.0;
    double min_gap_lower = 0.0;
    double min_gap_upper = 0.0;
    std::size_t violations = 0;
    /// ||Y~_n - Y~_{n-1}||, n = 1, 2, ...
    std::vector<NormPair> sequence_norms;
    /// Nodes where Y~_n exceeds Y~_{n-1} by more than the tolerance.
    std::size_t monotone_violations = 0;
    bool strictly_decreasing = false;
    bool converged1 = false;
    bool converged2 = false;
    double beta_diagnostic = 0.0;
    double rate_diagnostic = 1.0 / 3.0;
    double tolerance = 1e-8;
    bool pass = false;
};

inline void write_csv(std::ostream& os, const OrderingReport& rep) {
    os << "n,norm_Y,norm_Z\n";
    for (std::size_t i = 0; i < rep.sequence_norms.size(); ++i)
        os << (i + 1) << ',' << format_double(rep.sequence_norms[i].y) << ','
           << format_double(rep.sequence_norms[i].z) << '\n';
}

/// Ordering of the solutions of model1 (driver f1, terminal g1) and model2
/// (f2, g2) through the decreasing sequence Y~_0 = Y2,
/// Y~_n = solution with driver fbar(..., Y~_{n-1}(t + delta)) and terminal gbar.
inline OrderingReport compare(const ModelSpec& model1, const ModelSpec& model2, const DriverSpec& fbar,
                              const TerminalData& gbar, const TimeGrid& grid, const SpaceParams& space,
                              const PicardOptions& opt, std::size_t max_sequence = 40) {
    OrderingReport rep;
    auto inapplicable = [&](std::string why) {
        rep.applicable = false;
        rep.reason = std::move(why);
        return rep;
    };
    if (!(model1.coefficients == model2.coefficients) || !(model1.delays == model2.delays) || model1.T != model2.T)
        return inapplicable("models must share coefficients, delays and T");
    if (model1.driver.uses_az() || model2.driver.uses_az() || fbar.uses_az())
        return inapplicable("drivers with Z-anticipation are outside the comparison setting");

    ModelSpec bar = model2;
    bar.driver = fbar;
    bar.terminal = gbar;
    const BsdeSolver s1(model1, grid, space), s2(model2, grid, space), sb(bar, grid, space);
    const SpaceGrid& xs = s2.space();

    // Hypotheses by sampling: f1 <= fbar <= f2, fbar increasing in ay, g1 <= gbar <= g2.
    {
        CounterRng rng(0xc0ffeeULL, 1);
        auto draw = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
        for (int i = 0; i < 2000; ++i) {
            DriverArgs a{draw(0.0, model2.T), draw(xs.x_min(), xs.x_max()), draw(-10, 10), draw(-10, 10),
                         draw(-10, 10), 0.0};
            const double v1 = model1.driver(a), vb = fbar(a), v2 = model2.driver(a);
            const double slack = 1e-12 * (1.0 + std::abs(vb));
            if (v1 > vb + slack || vb > v2 + slack) return inapplicable("driver sandwich f1 <= fbar <= f2 fails");
            DriverArgs a2 = a;
            a2.ay = a.ay + draw(0.0, 5.0);
            if (fbar(a2) < vb - slack) return inapplicable("fbar is not increasing in the anticipated argument");
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double x = xs.x(i);
            const double g1 = model1.terminal.g(x), gb = gbar.g(x), g2 = model2.terminal.g(x);
            const double slack = 1e-12 * (1.0 + std::abs(gb));
            if (g1 > gb + slack || gb > g2 + slack) return inapplicable("terminal sandwich g1 <= gbar <= g2 fails");
        }
    }

    const auto r1 = picard_solve(s1, opt);
    const auto r2 = picard_solve(s2, opt);
    rep.converged1 = r1.trace.converged;
    rep.converged2 = r2.trace.converged;

    const double M = s2.table().ratio_bound();
    rep.beta_diagnostic = 8.0 * fbar.lipschitz() * M * (model2.delays.L + 1.0) + 4.0 / M;

    const double H = model2.coefficients.hurst;
    SolutionField prev = r2.field;
    const double floor = std::max(opt.tol, 1e-12);
    for (std::size_t n = 1; n <= max_sequence; ++n) {
        SolutionField next = sb.terminal_extension();
        sb.sweep(next, &prev, 0, sb.k_T());
        const NormPair d = weighted_norms(next, prev, s2.marginals(), H, opt.beta, 0, grid.n_steps());
        for (std::size_t k = 0; k < grid.size(); ++k)
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (next.u(k, i) > prev.u(k, i) + rep.tolerance) ++rep.monotone_violations;
        rep.sequence_norms.push_back(d);
        prev = std::move(next);
        if (d.combined() < floor) break;
    }
    rep.strictly_decreasing = true;
    for (std::size_t i = 1; i < rep.sequence_norms.size(); ++i)
        if (rep.sequence_norms[i - 1].combined() >= floor &&
            !(rep.sequence_norms[i].combined() < rep.sequence_norms[i - 1].combined()))
            rep.strictly_decreasing = false;

    rep.min_gap = rep.min_gap_lower = rep.min_gap_upper = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double u1 = r1.field.u(k, i), u2 = r2.field.u(k, i), ub = prev.u(k, i);
            rep.min_gap = std::min(rep.min_gap, u2 - u1);
            rep.min_gap_lower = std::min(rep.min_gap_lower, ub - u1);
            rep.min_gap_upper = std::min(rep.min_gap_upper, u2 - ub);
            if (u2 - u1 < -rep.tolerance) ++rep.violations;
        }
    rep.pass = rep.min_gap >= -rep.tolerance && rep.min_gap_lower >= -rep.tolerance &&
               rep.min_gap_upper >= -rep.tolerance && rep.strictly_decreasing && rep.converged1 && rep.converged2;
    return rep;
}

}  // namespace fbsde
