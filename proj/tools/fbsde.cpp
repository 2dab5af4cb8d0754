// SPDX-License-Identifier: MIT
// Command-line runner: simulate, validate, solve, verify, compare, converge.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde.hpp"

namespace fs = std::filesystem;
using namespace fbsde;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;
    std::optional<double> tol;
};

class Output {
public:
    // config.ini records the run relative to its own directory, so reruns
    // into different directories stay byte-identical.
    explicit Output(const RunConfig& c) : dir_(c.out_dir) {
        fs::create_directories(dir_);
        RunConfig local = c;
        local.out_dir = ".";
        open("config.ini") << serialize_config(local);
    }

    std::ofstream open(const std::string& name) const {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
        return os;
    }

    void add(Verdict v) {
        std::cout << (v.pass ? "PASS " : "FAIL ") << v.test << ' ' << v.metric << " = " << format_double(v.value)
                  << " (target " << format_double(v.target) << ", tolerance " << format_double(v.tolerance)
                  << ")\n";
        verdicts_.push_back(std::move(v));
    }

    int finish() const {
        auto os = open("verdict.csv");
        write_verdicts(os, verdicts_);
        const bool ok = std::all_of(verdicts_.begin(), verdicts_.end(), [](const Verdict& v) { return v.pass; });
        return ok ? 0 : 1;
    }

private:
    fs::path dir_;
    std::vector<Verdict> verdicts_;
};

RunConfig load(const Overrides& o) {
    RunConfig c = load_config(o.config);
    if (o.out) c.out_dir = *o.out;
    if (o.seed) c.montecarlo.seed = *o.seed;
    if (o.paths) c.montecarlo.n_paths = *o.paths;
    if (o.steps) c.grid.n_steps = *o.steps;
    if (o.tol) c.solver.tol = *o.tol;
    if (c.montecarlo.n_paths == 0 || c.grid.n_steps == 0 || !(c.solver.tol > 0.0))
        throw ConfigError("paths, steps and tol must be positive");
    return c;
}

// Exit 2 on any failed validation check, naming it.
void require_valid(const ModelSpec& model, const TimeGrid& grid, double beta) {
    const ValidationReport rep = validate(model, grid, beta);
    if (const Check* bad = rep.first_failure())
        throw DomainError("model validation failed: " + bad->name + ": " + bad->detail);
}

int cmd_simulate(const RunConfig& c) {
    Output out(c);
    const TimeGrid grid = c.time_grid();
    const PathBatch batch = sample_paths(grid, c.model.coefficients.hurst, c.montecarlo.n_paths, c.montecarlo.seed);
    {
        auto os = out.open("paths.csv");
        write_csv(os, batch);
    }
    {
        auto os = out.open("kernel_table.csv");
        write_csv(os, build_kernel_table(c.model, grid));
    }
    const CovarianceCheck cov = check_covariance(batch);
    out.add({"simulate", "covariance_pass_fraction", 0.99, 0.0, cov.pass_fraction(), cov.pass_fraction() >= 0.99});
    return out.finish();
}

int cmd_validate(const RunConfig& c) {
    Output out(c);
    const ValidationReport rep = validate(c.model, c.time_grid(), c.solver.beta);
    {
        auto os = out.open("validation.csv");
        write_csv(os, rep);
    }
    for (const auto& ch : rep.checks) std::cout << (ch.passed ? "ok   " : "FAIL ") << ch.name << ": " << ch.detail << '\n';
    if (const Check* bad = rep.first_failure()) {
        std::cerr << "error: " << bad->name << ": " << bad->detail << '\n';
        return 2;
    }
    return 0;
}

int cmd_solve(const RunConfig& c) {
    const TimeGrid grid = c.time_grid();
    require_valid(c.model, grid, c.solver.beta);
    Output out(c);
    const BsdeSolver solver(c.model, grid, c.space());
    const PicardResult res = picard_solve(solver, c.solver);
    {
        auto os = out.open("solution.csv");
        write_csv(os, res.field);
    }
    {
        auto os = out.open("trace.csv");
        write_csv(os, res.trace);
    }
    const AprioriReport ap = apriori_report(res.field, c.model, solver.marginals(), c.solver.beta);
    {
        auto os = out.open("apriori.csv");
        write_csv(os, ap);
    }
    out.add({"solve", "converged", 1.0, 0.0, res.trace.converged ? 1.0 : 0.0, res.trace.converged});
    out.add({"solve", "windows", 0.0, 0.0, double(res.trace.windows.size()), true});
    out.add({"solve", "contraction_ratio", 0.75, 0.0, res.trace.empirical_ratio(),
             res.trace.empirical_ratio() <= 0.75});
    const double ratio = ap.ratio ? *ap.ratio : 0.0;
    out.add({"solve", ap.ratio ? "apriori_ratio" : "apriori_ratio_zero_over_zero", 0.0, 0.0, ratio,
             !ap.ratio || std::isfinite(*ap.ratio)});
    return out.finish();
}

int cmd_verify(const RunConfig& c) {
    const TimeGrid grid = c.time_grid();
    require_valid(c.model, grid, c.solver.beta);
    if (c.grid.n_steps % 4 != 0) throw ConfigError("verify needs grid.n_steps divisible by 4");
    Output out(c);
    const double H = c.model.coefficients.hurst;
    const std::size_t n = c.montecarlo.n_paths;
    const std::uint64_t seed = c.montecarlo.seed;

    const PathBatch unit = sample_paths(TimeGrid(1.0, 400), H, n, seed);
    const MomentReport moments = integral_moment_suite(unit, default_integrand_corpus());
    {
        auto os = out.open("moments.csv");
        write_csv(os, moments);
    }
    for (const auto& r : moments.results) {
        out.add({"moment:" + r.name, "mean_over_se", 0.0, 3.0, r.se > 0 ? std::abs(r.mean) / r.se : 0.0, r.mean_ok});
        out.add({"moment:" + r.name, "variance", r.target_variance, 0.05 * r.target_variance, r.variance,
                 r.variance_ok});
    }

    const ProcessSpec bm{0.0, ScalarFunction::constant(0.0), ScalarFunction::constant(1.0)};
    const ProcessSpec drifted{0.5, ScalarFunction::linear(1.0, -1.0), ScalarFunction::linear(1.0, 0.5)};
    std::vector<ResidualReport> reports;
    for (const auto& [F, spec] : std::vector<std::pair<std::string, ProcessSpec>>{
             {"x", bm}, {"x", drifted}, {"x^2", bm}, {"t*x", bm}, {"x^3", drifted}, {"exp(x/2)", drifted},
             {"sin(x)", drifted}})
        reports.push_back(ito_residual(F, spec, unit));
    const ProcessSpec d1{0.0, ScalarFunction::exponential(1.0, 1.0), ScalarFunction::constant(0.0)};
    const ProcessSpec d2{0.0, ScalarFunction::polynomial({1.0, 0.0, 1.0}), ScalarFunction::constant(0.0)};
    const ProcessSpec t_only{0.0, ScalarFunction::constant(1.0), ScalarFunction::constant(0.0)};
    for (const auto& [a, b] : std::vector<std::pair<ProcessSpec, ProcessSpec>>{
             {d1, d2}, {bm, bm}, {bm, t_only}, {drifted, bm}, {drifted, d2}}) {
        reports.push_back(product_rule_residual(a, b, unit, {4, 2, 1}, a.f(0.0) == 0.0 && b.f(0.0) == 0.0 ? 1.8 : 0.8));
    }
    reports.push_back(bsde_refinement(c.model, c.grid.n_steps / 4, c.space(), c.solver, n, seed ^ 0xb5deULL));
    {
        auto os = out.open("residuals.csv");
        for (std::size_t i = 0; i < reports.size(); ++i) {
            std::ostringstream tmp;
            write_csv(tmp, reports[i]);
            std::string s = tmp.str();
            if (i > 0) s = s.substr(s.find('\n') + 1);
            os << s;
        }
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const std::string name = r.name + "#" + std::to_string(i);
        if (r.exact)
            out.add({name, "max_residual", 0.0, 0.0, *std::max_element(r.residual.begin(), r.residual.end()), true});
        else
            out.add({name, "order", r.threshold, 0.0, r.order, r.pass});
    }
    return out.finish();
}

int cmd_compare(const RunConfig& c) {
    const TimeGrid grid = c.time_grid();
    if (!c.compare) throw ConfigError("compare needs a [compare] section");
    require_valid(c.model, grid, c.solver.beta);
    const ModelSpec m1 = compare_model1(c);
    require_valid(m1, grid, c.solver.beta);
    TerminalData gbar = c.model.terminal;
    gbar.g = c.compare->g_bar;
    Output out(c);
    const OrderingReport rep = compare(m1, c.model, c.compare->driver_bar, gbar, grid, c.space(), c.solver);
    {
        auto os = out.open("ordering.csv");
        write_csv(os, rep);
    }
    if (!rep.applicable) {
        std::cout << "comparison inapplicable: " << rep.reason << '\n';
        out.add({"compare", "applicable", 1.0, 0.0, 0.0, true});
        return out.finish();
    }
    out.add({"compare", "min_u2_minus_u1", 0.0, rep.tolerance, rep.min_gap, rep.min_gap >= -rep.tolerance});
    out.add({"compare", "min_ubar_minus_u1", 0.0, rep.tolerance, rep.min_gap_lower,
             rep.min_gap_lower >= -rep.tolerance});
    out.add({"compare", "min_u2_minus_ubar", 0.0, rep.tolerance, rep.min_gap_upper,
             rep.min_gap_upper >= -rep.tolerance});
    out.add({"compare", "sequence_strictly_decreasing", 1.0, 0.0, rep.strictly_decreasing ? 1.0 : 0.0,
             rep.strictly_decreasing});
    out.add({"compare", "both_converged", 1.0, 0.0, rep.converged1 && rep.converged2 ? 1.0 : 0.0,
             rep.converged1 && rep.converged2});
    out.add({"compare", "beta_diagnostic", 0.0, 0.0, rep.beta_diagnostic, true});
    return out.finish();
}

int cmd_converge(const RunConfig& c) {
    const TimeGrid grid = c.time_grid();
    require_valid(c.model, grid, c.solver.beta);
    Output out(c);
    const ConvergenceReport rep = space_convergence(c.model, grid, c.space(), c.solver);
    {
        auto os = out.open("convergence.csv");
        write_csv(os, rep);
    }
    out.add({"converge", rep.exact ? "exact" : "space_order", rep.threshold, 0.0,
             rep.exact ? rep.difference.back() : rep.order, rep.pass});
    return out.finish();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Anticipative BSDEs driven by fractional Brownian motion"};
    app.require_subcommand(0, 1);
    bool show_version = false, list_fixtures = false;
    app.add_flag("--version", show_version, "Print the version and exit");
    app.add_flag("--list-fixtures", list_fixtures, "List the shipped fixture files");

    Overrides o;
    std::string chosen;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "Sample fBm paths and check their covariance"},
        {"validate", "Check a model file against the delay and driver conditions"},
        {"solve", "Solve the anticipative BSDE by Picard iteration"},
        {"verify", "Run the Monte Carlo and residual verification suites"},
        {"compare", "Check the ordering of two solutions"},
        {"converge", "Space refinement study on three grids"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "Model/run configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--paths", o.paths, "Number of Monte Carlo paths");
        sub->add_option("--steps", o.steps, "Time steps over [0, T+K]");
        sub->add_option("--tol", o.tol, "Picard tolerance");
        sub->callback([&chosen, name = name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (show_version) {
        std::cout << "fbsde " << fbsde::version << '\n';
        return 0;
    }
    if (list_fixtures) {
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(FBSDE_FIXTURE_DIR))
            if (entry.path().extension() == ".cfg") names.push_back(entry.path().string());
        std::sort(names.begin(), names.end());
        for (const auto& n : names) std::cout << n << '\n';
        return 0;
    }
    if (chosen.empty()) {
        std::cerr << app.help();
        return 2;
    }

    try {
        const RunConfig c = load(o);
        if (chosen == "simulate") return cmd_simulate(c);
        if (chosen == "validate") return cmd_validate(c);
        if (chosen == "solve") return cmd_solve(c);
        if (chosen == "verify") return cmd_verify(c);
        if (chosen == "compare") return cmd_compare(c);
        return cmd_converge(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return 2;
    } catch (const GridMismatch& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
}
