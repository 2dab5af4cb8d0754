#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fbsde/verify.hpp"

using namespace fbsde;

TEST(Stats, SampleStatsAndOrderFit) {
    const std::vector<double> v = {1, 2, 3, 4};
    const SampleStats s = sample_stats(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.variance, 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(s.se, std::sqrt(5.0 / 12.0));
    const std::vector<double> dt = {0.1, 0.05, 0.025};
    const std::vector<double> r = {3 * 0.01, 3 * 0.0025, 3 * 0.000625};
    EXPECT_NEAR(fit_order(dt, r), 2.0, 1e-12);
}

TEST(Verdicts, CsvColumns) {
    const std::vector<Verdict> v = {{"a", "m", 1.0, 0.1, 1.05, true}};
    std::ostringstream os;
    write_verdicts(os, v);
    EXPECT_EQ(os.str(), "test,metric,target,tolerance,value,pass\na,m,1,0.1,1.05,1\n");
}

TEST(Moments, ZeroIntegrandIsExactlyZero) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 64), 0.75, 500, 3);
    const MomentReport rep = integral_moment_suite(batch, {{"zero", ScalarFunction::constant(0.0)}});
    ASSERT_EQ(rep.results.size(), 1u);
    EXPECT_EQ(rep.results[0].mean, 0.0);
    EXPECT_EQ(rep.results[0].variance, 0.0);
    EXPECT_TRUE(rep.results[0].mean_ok);
}

TEST(Moments, UnitIntegrandTargetIsOne) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 128), 0.75, 10000, 8);
    const MomentReport rep = integral_moment_suite(batch, default_integrand_corpus());
    EXPECT_EQ(rep.results.size(), 5u);
    EXPECT_NEAR(rep.results[0].target_variance, 1.0, 1e-12);
    // int B dB-like sums of F = 1 telescope to B_1.
    EXPECT_TRUE(rep.results[0].mean_ok);
    EXPECT_TRUE(rep.results[0].variance_ok);
}

TEST(Ito, LinearFunctionIsExact) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 64), 0.7, 200, 4);
    const ProcessSpec spec{0.3, ScalarFunction::linear(1, 2), ScalarFunction::linear(1, -0.5)};
    const ResidualReport r = ito_residual("x", spec, batch);
    EXPECT_TRUE(r.exact);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.n_steps, (std::vector<std::size_t>{16, 32, 64}));
}

TEST(Ito, QuadraticConvergesAtFirstOrder) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 256), 0.75, 2000, 5);
    const ProcessSpec bm{};
    const ResidualReport r = ito_residual("x^2", bm, batch);
    EXPECT_FALSE(r.exact);
    EXPECT_GE(r.order, 0.8);
    EXPECT_TRUE(r.pass);
}

TEST(Ito, UnknownFunction) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 8), 0.7, 2, 4);
    EXPECT_THROW(ito_residual("cosh", ProcessSpec{}, batch), DomainError);
    EXPECT_NO_THROW(find_test_function("t*x^2"));
}

TEST(ProductRule, CorrectionUsesIntegrands) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 256), 0.75, 2000, 6);
    const ResidualReport r = product_rule_residual(ProcessSpec{}, ProcessSpec{}, batch);
    EXPECT_GE(r.order, 0.8);
    // The same identity with the drift coefficients in the correction misses
    // the 2 ||1||^2_T = 2 term entirely.
    ASSERT_TRUE(r.diagnostic.has_value());
    EXPECT_GT(*r.diagnostic, 0.5);
}

TEST(ProductRule, PureDriftSecondOrder) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 64), 0.75, 10, 6);
    const ProcessSpec a{0.0, ScalarFunction::exponential(1, 1), ScalarFunction::constant(0)};
    const ProcessSpec b{1.0, ScalarFunction::polynomial({1, 0, 1}), ScalarFunction::constant(0)};
    const ResidualReport r = product_rule_residual(a, b, batch, {4, 2, 1}, 1.8);
    EXPECT_NEAR(r.order, 2.0, 0.05);
}

TEST(BsdeResidual, LinearTerminalIsExact) {
    ModelSpec m;
    m.terminal.g = ScalarFunction::linear(0, 1);
    const ResidualReport r = bsde_refinement(m, 25, {200, 6.0}, {}, 300, 9);
    EXPECT_TRUE(r.exact);
}

TEST(BsdeResidual, GridMismatch) {
    ModelSpec m;
    const BsdeSolver s(m, TimeGrid(1.0, 20), {40, 6.0});
    const SolutionField f = s.terminal_extension();
    const PathBatch wrong = sample_paths(TimeGrid(1.0, 10), 0.75, 5, 1);
    EXPECT_THROW(bsde_residual(s, f, wrong), GridMismatch);
}

TEST(Convergence, QuadraticIsExactInSpace) {
    ModelSpec m;
    m.terminal = {ScalarFunction::polynomial({0, 0, 1}), ScalarFunction::linear(0, 2), 2};
    const ConvergenceReport r = space_convergence(m, TimeGrid(1.0, 50), {120, 6.0}, {});
    EXPECT_TRUE(r.exact);
    EXPECT_TRUE(r.pass);
    std::ostringstream os;
    write_csv(os, r);
    EXPECT_NE(os.str().find("exact"), std::string::npos);
}

namespace {

ModelSpec anticipative(double c0) {
    ModelSpec m;
    m.delays.K = 0.25;
    m.delays.delta = ScalarFunction::constant(0.25);
    m.driver = DriverSpec::linear(c0, 0, 0, 0, 1, 0);
    m.terminal.g = ScalarFunction::linear(0, 1);
    m.terminal.h = ScalarFunction::constant(1);
    return m;
}

}  // namespace

TEST(Compare, ShiftedDriversAreOrdered) {
    const ModelSpec m1 = anticipative(-1.0), m2 = anticipative(0.0);
    const OrderingReport r = compare(m1, m2, m2.driver, m2.terminal, TimeGrid(1.25, 100), {120, 6.0}, {});
    ASSERT_TRUE(r.applicable) << r.reason;
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.min_gap, -1e-8);
    EXPECT_TRUE(r.strictly_decreasing);
    EXPECT_NEAR(r.beta_diagnostic, 8.0 * 1.0 * (4.0 / 3.0) * 2.0 + 3.0, 1e-3);
}

TEST(Compare, ZAnticipationIsInapplicable) {
    ModelSpec m1 = anticipative(-1.0), m2 = anticipative(0.0);
    m2.driver = DriverSpec::linear(0, 0, 0, 0, 1, 0.5);
    const OrderingReport r = compare(m1, m2, m2.driver, m2.terminal, TimeGrid(1.25, 50), {60, 6.0}, {});
    EXPECT_FALSE(r.applicable);
    EXPECT_FALSE(r.reason.empty());
}

TEST(Compare, ViolatedSandwichIsInapplicable) {
    const ModelSpec m1 = anticipative(0.5), m2 = anticipative(0.0);
    const OrderingReport r = compare(m1, m2, m2.driver, m2.terminal, TimeGrid(1.25, 50), {60, 6.0}, {});
    EXPECT_FALSE(r.applicable);
}
