// Acceptance criteria 1-10: one PASS/FAIL line each, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "fbsde.hpp"

namespace fs = std::filesystem;
using namespace fbsde;

namespace {

const std::string fixture_dir = FBSDE_FIXTURE_DIR;

RunConfig fixture(const std::string& name) { return load_config(fixture_dir + "/" + name + ".cfg"); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------- 1

Outcome fbm_exactness() {
    std::string detail;
    bool ok = true;
    for (double H : {0.6, 0.75, 0.9}) {
        const auto t0 = std::chrono::steady_clock::now();
        const PathBatch batch = sample_paths(TimeGrid(1.0, 64), H, 10000, 2024);
        const CovarianceCheck c = check_covariance(batch);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = ok && c.pass_fraction() >= 0.99 && secs < 30.0;
        detail += "H=" + num(H) + " pass " + num(100 * c.pass_fraction()) + "% in " + num(secs) + "s; ";
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 2

Outcome moments() {
    const auto t0 = std::chrono::steady_clock::now();
    const PathBatch batch = sample_paths(TimeGrid(1.0, 512), 0.75, 10000, 77);
    const MomentReport rep = integral_moment_suite(batch, default_integrand_corpus());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = rep.results.size() == 5 && secs < 30.0;
    std::string detail;
    for (const auto& r : rep.results) {
        ok = ok && r.mean_ok && r.variance_ok;
        detail += r.name + " mean/se " + num(std::abs(r.mean) / r.se) + " var " + num(r.variance) + "/" +
                  num(r.target_variance) + "; ";
    }
    return {ok, detail + num(secs) + "s"};
}

// ---------------------------------------------------------------- 3

Outcome quadrature() {
    double worst_ip = 0.0, worst_hat = 0.0;
    for (double H : {0.6, 0.75, 0.9}) {
        const TimeGrid g(1.0, 64);
        const std::vector<double> one(g.size(), 1.0);
        const auto prof = InnerProduct(g, H).profile(one, one);
        const auto hat = hat_transform(g, one, H);
        for (std::size_t k = 1; k < g.size(); ++k) {
            const double t = g.time(k);
            worst_ip = std::max(worst_ip, std::abs(prof[k] / std::pow(t, 2 * H) - 1.0));
            worst_hat = std::max(worst_hat, std::abs(hat[k] / (H * std::pow(t, 2 * H - 1)) - 1.0));
        }
    }
    return {worst_ip < 1e-6 && worst_hat < 1e-6,
            "max rel error <1,1>_t " + num(worst_ip) + ", sigma_hat " + num(worst_hat)};
}

// ---------------------------------------------------------------- 4

Outcome residuals() {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 400), 0.75, 4000, 31);
    const ProcessSpec bm{0.0, ScalarFunction::constant(0.0), ScalarFunction::constant(1.0)};
    const ProcessSpec drifted{0.5, ScalarFunction::linear(1.0, -1.0), ScalarFunction::linear(1.0, 0.5)};
    const ProcessSpec d1{0.0, ScalarFunction::exponential(1.0, 1.0), ScalarFunction::constant(0.0)};
    const ProcessSpec d2{0.0, ScalarFunction::polynomial({1.0, 0.0, 1.0}), ScalarFunction::constant(0.0)};
    const ProcessSpec t_only{0.0, ScalarFunction::constant(1.0), ScalarFunction::constant(0.0)};
    std::vector<ResidualReport> reps;
    for (const auto& [F, spec] : std::vector<std::pair<std::string, ProcessSpec>>{
             {"x", bm}, {"x", drifted}, {"x^2", bm}, {"t*x", drifted}, {"t*x^2", bm}, {"x^3", drifted},
             {"exp(x/2)", drifted}, {"sin(x)", bm}})
        reps.push_back(ito_residual(F, spec, batch));
    reps.push_back(product_rule_residual(d1, d2, batch, {4, 2, 1}, 0.8));
    for (const auto& [a, b] : std::vector<std::pair<ProcessSpec, ProcessSpec>>{
             {bm, bm}, {bm, t_only}, {drifted, bm}, {drifted, d2}, {drifted, drifted}})
        reps.push_back(product_rule_residual(a, b, batch));
    bool ok = true;
    std::size_t exact = 0;
    double min_order = INFINITY;
    for (const auto& r : reps) {
        ok = ok && r.pass;
        if (r.exact)
            ++exact;
        else
            min_order = std::min(min_order, r.order);
    }
    // The Ito fixtures with F = x have no second-order term.
    ok = ok && reps[0].exact && reps[1].exact;
    return {ok, std::to_string(reps.size()) + " fixtures, " + std::to_string(exact) + " exact, min order " +
                    num(min_order)};
}

// ---------------------------------------------------------------- 5

template <class F>
double max_error(const SolutionField& f, std::size_t k_lo, std::size_t k_hi, double bound, F&& expected) {
    double e = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k)
        for (std::size_t i = 0; i < f.cols(); ++i) {
            const double x = f.space_grid().x(i);
            if (std::abs(x) <= bound) e = std::max(e, std::abs(f.u(k, i) - expected(f.time_grid().time(k), x)));
        }
    return e;
}

Outcome solver_oracles() {
    // dt = 1/400, dx = 1/200 on the solver domain.
    const RunConfig lin = fixture("linear_terminal"), quad = fixture("quadratic_terminal"),
                    ant = fixture("anticipative_oracle");
    auto solve = [](const RunConfig& c) {
        const BsdeSolver s(c.model, c.time_grid(), c.space());
        return std::make_pair(picard_solve(s, c.solver), s.space().dx());
    };
    const auto [rl, dxl] = solve(lin);
    const auto [rq, dxq] = solve(quad);
    const auto [ra, dxa] = solve(ant);
    const double H = quad.model.coefficients.hurst;
    const double el = max_error(rl.field, 0, rl.field.k_T(), 6.0, [](double, double x) { return x; });
    const double eq = max_error(rq.field, 0, rq.field.k_T(), 6.0,
                                [H](double t, double x) { return x * x + 1.0 - std::pow(t, 2 * H); });
    const std::size_t k_half = ra.field.time_grid().node_index(0.5);
    const double ea = max_error(ra.field, k_half, k_half, 6.0, [](double, double x) { return 1.53125 * x; });
    const bool grids = std::abs(lin.time_grid().dt() - 1.0 / 400) < 1e-15 &&
                       std::abs(quad.time_grid().dt() - 1.0 / 400) < 1e-15 &&
                       std::abs(ant.time_grid().dt() - 1.0 / 400) < 1e-15 && std::abs(dxl - 0.005) < 1e-3 &&
                       std::abs(dxq - 0.005) < 1e-3 && std::abs(dxa - 0.005) < 1e-3;
    return {grids && el <= 1e-3 && eq <= 1e-3 && ea <= 1e-3,
            "linear " + num(el) + ", quadratic " + num(eq) + ", anticipative Y_0.5 " + num(ea) + " (dx " +
                num(dxl) + ", " + num(dxq) + ", " + num(dxa) + ")"};
}

// ---------------------------------------------------------------- 6

const std::vector<std::string> anticipative_fixtures = {"anticipative_oracle", "short_delay",
                                                        "compare_anticipative", "compare_tanh"};

Outcome contraction() {
    bool ok = true;
    std::string detail;
    for (const auto& name : anticipative_fixtures) {
        const RunConfig c = fixture(name);
        const PicardResult r = picard_solve(c.model, c.time_grid(), c.space(), c.solver);
        const double ratio = r.trace.empirical_ratio();
        const std::size_t iters = r.trace.max_window_iterations();
        ok = ok && r.trace.converged && ratio <= 0.75 && iters <= 20;
        detail += name + " ratio " + num(ratio) + " iters " + std::to_string(iters) + " windows " +
                  std::to_string(r.trace.windows.size()) + "; ";
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 7

Outcome apriori() {
    bool ok = true;
    std::string detail;
    for (const auto& name : {"linear_terminal", "quadratic_terminal", "anticipative_oracle", "short_delay",
                             "compare_tanh", "reduction_tanh"}) {
        const RunConfig c = fixture(name);
        double lo = INFINITY, hi = 0.0;
        for (double per_unit : {100.0, 200.0, 400.0}) {
            const std::size_t n = std::size_t(std::llround(c.model.horizon() * per_unit));
            const BsdeSolver s(c.model, TimeGrid(c.model.horizon(), n), {240, c.grid.x_span});
            const PicardResult r = picard_solve(s, c.solver);
            const AprioriReport ap = apriori_report(r.field, c.model, s.marginals(), c.solver.beta);
            const double ratio = ap.ratio.value_or(0.0);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        const double spread = hi > 0.0 ? (hi - lo) / hi : 0.0;
        ok = ok && spread < 0.10 && std::isfinite(hi);
        detail += std::string(name) + " " + num(lo) + ".." + num(hi) + "; ";
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 8

Outcome comparison() {
    bool ok = true;
    std::string detail;
    for (const auto& name : {"compare_shift", "compare_anticipative", "compare_tanh"}) {
        const RunConfig c = fixture(name);
        TerminalData gbar = c.model.terminal;
        gbar.g = c.compare->g_bar;
        const OrderingReport r =
            compare(compare_model1(c), c.model, c.compare->driver_bar, gbar, c.time_grid(), c.space(), c.solver);
        ok = ok && r.applicable && r.min_gap >= -1e-8 && r.strictly_decreasing && r.pass;
        detail += std::string(name) + " min(u2-u1) " + num(r.min_gap) + " seq " +
                  std::to_string(r.sequence_norms.size()) + (r.strictly_decreasing ? " decreasing; " : " NOT decreasing; ");
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 9

Outcome reduction() {
    bool ok = true;
    std::string detail;
    for (const auto& name : {"reduction_linear", "reduction_tanh", "reduction_quadratic"}) {
        const RunConfig c = fixture(name);
        const bool no_delay = c.model.delays.K == 0.0 && c.model.delays.delta == ScalarFunction::constant(0.0) &&
                              c.model.delays.zeta == ScalarFunction::constant(0.0);
        const PicardResult r = picard_solve(c.model, c.time_grid(), c.space(), c.solver);
        // Plain equation: the driver sees (Y_t, Z_t) in the anticipated slots.
        ModelSpec plain = c.model;
        const DriverSpec full = c.model.driver;
        plain.driver = DriverSpec([full](const DriverArgs& a) { return full({a.t, a.x, a.y, a.z, a.y, a.z}); },
                                  2.0 * full.lipschitz(), false, false);
        const SolutionField p = solve_direct(BsdeSolver(plain, c.time_grid(), c.space()));
        // Node-wise, relative to the size of the solution at that node.
        double du = 0.0;
        for (std::size_t k = 0; k < p.rows(); ++k)
            for (std::size_t i = 0; i < p.cols(); ++i)
                du = std::max(du, std::abs(r.field.u(k, i) - p.u(k, i)) / (1.0 + std::abs(p.u(k, i))));
        ok = ok && no_delay && r.trace.converged && du <= c.solver.tol;
        detail += std::string(name) + " max|u - u_plain|/(1+|u|) " + num(du) + " (tol " + num(c.solver.tol) + "); ";
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 10

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FBSDE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "fbsde_acceptance_determinism";
    fs::remove_all(root);
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"simulate", "short_delay"}, {"solve", "short_delay"}, {"verify", "quadratic_terminal"},
        {"compare", "compare_tanh"}};
    bool ok = true;
    std::size_t files = 0;
    for (const auto& [cmd, fx] : runs) {
        const fs::path a = root / (cmd + "_a"), b = root / (cmd + "_b");
        for (const auto& d : {a, b})
            if (run_cli(cmd + " --config " + fixture_dir + "/" + fx + ".cfg --out " + d.string()) != 0) ok = false;
        for (const auto& e : fs::directory_iterator(a)) {
            ++files;
            if (slurp(e.path()) != slurp(b / e.path().filename())) ok = false;
        }
    }
    fs::remove_all(root);
    return {ok && files > 0, std::to_string(files) + " files compared across " + std::to_string(runs.size()) +
                                  " subcommands"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"fbm covariance exactness", fbm_exactness},
        {"divergence integral moments", moments},
        {"quadrature oracles", quadrature},
        {"Ito and product formula residuals", residuals},
        {"solver closed-form oracles", solver_oracles},
        {"Picard contraction", contraction},
        {"a priori ratio stability", apriori},
        {"comparison ordering", comparison},
        {"reduction to the non-anticipative equation", reduction},
        {"byte-identical reruns", determinism}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o{false, ""};
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (criteria.size() - std::size_t(failed)) << "/" << criteria.size() << " criteria passed\n";
    return failed ? 1 : 0;
}
