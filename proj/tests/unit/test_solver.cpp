#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "fbsde/solver.hpp"

using namespace fbsde;

namespace {

ModelSpec terminal_only(ScalarFunction g, ScalarFunction h, int degree) {
    ModelSpec m;
    m.terminal = {std::move(g), std::move(h), degree};
    return m;
}

ModelSpec anticipative() {
    ModelSpec m;
    m.delays.K = 0.25;
    m.delays.delta = ScalarFunction::constant(0.25);
    m.driver = DriverSpec::linear(0, 0, 0, 0, 1, 0);
    m.terminal.g = ScalarFunction::linear(0, 1);
    m.terminal.h = ScalarFunction::constant(1);
    return m;
}

// Largest |u - expected(t, x)| over rows [0, k_T] and |x| <= bound.
template <class F>
double max_error(const SolutionField& f, F&& expected, double bound) {
    double e = 0.0;
    for (std::size_t k = 0; k <= f.k_T(); ++k)
        for (std::size_t i = 0; i < f.cols(); ++i) {
            const double x = f.space_grid().x(i);
            if (std::abs(x) <= bound)
                e = std::max(e, std::abs(f.u(k, i) - expected(f.time_grid().time(k), x)));
        }
    return e;
}

}  // namespace

TEST(Tridiagonal, MatchesDenseSolve) {
    const std::size_t n = 9;
    std::vector<double> a(n), b(n), c(n), d(n), work;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = i ? -0.3 - 0.01 * double(i) : 0.0;
        c[i] = i + 1 < n ? -0.7 : 0.0;
        b[i] = 2.0 + 0.1 * double(i);
        d[i] = std::sin(double(i));
        const auto ii = Eigen::Index(i);
        A(ii, ii) = b[i];
        if (i) A(ii, ii - 1) = a[i];
        if (i + 1 < n) A(ii, ii + 1) = c[i];
        rhs(ii) = d[i];
    }
    const Eigen::VectorXd x = A.partialPivLu().solve(rhs);
    detail::solve_tridiagonal(a, b, c, d, work);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(d[i], x(Eigen::Index(i)), 1e-13);
}

TEST(Solver, LinearTerminalIsExact) {
    const auto m = terminal_only(ScalarFunction::linear(0, 1), ScalarFunction::constant(1), 1);
    const BsdeSolver s(m, TimeGrid(1.0, 50), {200, 6.0});
    const auto r = picard_solve(s);
    EXPECT_TRUE(r.trace.converged);
    EXPECT_LT(max_error(r.field, [](double, double x) { return x; }, 10.0), 1e-11);
    for (std::size_t i = 0; i < r.field.cols(); ++i) EXPECT_NEAR(r.field.z(25, i), 1.0, 1e-11);
}

TEST(Solver, QuadraticTerminalClosedForm) {
    const auto m = terminal_only(ScalarFunction::polynomial({0, 0, 1}), ScalarFunction::linear(0, 2), 2);
    const BsdeSolver s(m, TimeGrid(1.0, 100), {480, 6.0});
    const auto r = picard_solve(s);
    const double err = max_error(r.field, [](double t, double x) { return x * x + 1.0 - std::pow(t, 1.5); }, 6.0);
    EXPECT_LT(err, 1e-8);
}

TEST(Solver, QuarticTerminalSecondOrderInSpace) {
    const auto m =
        terminal_only(ScalarFunction::polynomial({0, 0, 0, 0, 1}), ScalarFunction::polynomial({0, 0, 0, 4}), 4);
    auto exact = [](double t, double x) {
        const double v = 1.0 - std::pow(t, 1.5);
        return x * x * x * x + 6 * v * x * x + 3 * v * v;
    };
    double e[2];
    for (int j = 0; j < 2; ++j) {
        const auto r = picard_solve(BsdeSolver(m, TimeGrid(1.0, 100), {std::size_t(240 << j), 6.0}));
        e[j] = max_error(r.field, exact, 2.0);
    }
    EXPECT_GT(std::log2(e[0] / e[1]), 1.8);
}

TEST(Solver, ConstantDriver) {
    ModelSpec m;
    m.driver = DriverSpec::linear(1, 0, 0, 0, 0, 0);
    m.terminal.degree = 0;
    const auto r = picard_solve(BsdeSolver(m, TimeGrid(1.0, 40), {100, 6.0}));
    EXPECT_LT(max_error(r.field, [](double t, double) { return 1.0 - t; }, 100.0), 1e-12);
}

TEST(Solver, AnticipativeOracle) {
    const BsdeSolver s(anticipative(), TimeGrid(1.25, 100), {600, 6.0});
    const auto r = picard_solve(s);
    ASSERT_TRUE(r.trace.converged);
    const std::size_t k_half = s.grid().node_index(0.5);
    for (std::size_t i = 0; i < s.space().size(); ++i) {
        const double x = s.space().x(i);
        if (std::abs(x) <= 5.0) {
            EXPECT_NEAR(r.field.u(k_half, i), 1.53125 * x, 1e-8);
        }
    }
    for (double t : {0.75, 0.9, 1.0}) {
        const std::size_t k = s.grid().node_index(t);
        for (std::size_t i = 0; i < s.space().size(); i += 37) {
            EXPECT_NEAR(r.field.u(k, i), (2.0 - t) * s.space().x(i), 1e-8);
            EXPECT_NEAR(r.field.z(k, i), 2.0 - t, 1e-8);
        }
    }
}

TEST(Solver, PicardMatchesDirectSweep) {
    ModelSpec m = anticipative();
    m.delays.K = 0.1;
    m.delays.delta = ScalarFunction::linear(0.1, -0.1);
    m.delays.zeta = ScalarFunction::constant(0.05);
    m.driver = DriverSpec("tanh", {0.1, 0.05, -0.5, 0.3, 0.8, 0.2}, 0.8);
    const BsdeSolver s(m, TimeGrid(1.1, 110), {200, 6.0});
    const auto r = picard_solve(s, {.tol = 1e-10});
    const auto d = solve_direct(s);
    ASSERT_TRUE(r.trace.converged);
    const auto [du, dz] = d.max_difference(r.field, 0, s.grid().size());
    EXPECT_LT(du, 1e-8);
    EXPECT_LT(dz, 1e-7);
    EXPECT_LE(r.trace.empirical_ratio(), 0.75);
}

TEST(Solver, ReductionToPlainEquation) {
    // With no delays, f(y, z, ay, az) = f(y, z, y, z).
    ModelSpec m;
    m.driver = DriverSpec("tanh", {0.1, 0.05, -0.5, 0.3, 0.8, 0.2}, 0.8);
    m.terminal.g = ScalarFunction::linear(0, 1);
    ModelSpec plain = m;
    const DriverSpec full = m.driver;
    plain.driver = DriverSpec([full](const DriverArgs& a) { return full({a.t, a.x, a.y, a.z, a.y, a.z}); }, 1.6,
                              false, false);
    const TimeGrid g(1.0, 80);
    const auto r = picard_solve(BsdeSolver(m, g, {160, 6.0}), {.tol = 1e-10});
    const auto p = solve_direct(BsdeSolver(plain, g, {160, 6.0}));
    EXPECT_LT(r.field.max_difference(p, 0, g.size()).first, 1e-9);
}

TEST(Solver, FrozenSweepLeavesOtherRows) {
    const BsdeSolver s(anticipative(), TimeGrid(1.25, 50), {100, 6.0});
    const SolutionField ext = s.terminal_extension();
    const SolutionField out = solve_frozen(s, ext, 0.5, 1.0);
    const auto below = out.max_difference(ext, 0, s.grid().node_index(0.5));
    EXPECT_EQ(below.first, 0.0);
    EXPECT_GT(out.max_difference(ext, 0, s.grid().size()).first, 0.1);
}

TEST(Solver, GridChecks) {
    EXPECT_THROW(BsdeSolver(anticipative(), TimeGrid(1.0, 40), {}), GridMismatch);
    EXPECT_THROW(BsdeSolver(anticipative(), TimeGrid(1.25, 7), {}), DomainError);
    const BsdeSolver a(anticipative(), TimeGrid(1.25, 50), {100, 6.0});
    const BsdeSolver b(anticipative(), TimeGrid(1.25, 50), {120, 6.0});
    const SolutionField fa = a.terminal_extension();
    const SolutionField fb = b.terminal_extension();
    EXPECT_THROW(fa.max_difference(fb, 0, 1), GridMismatch);
    EXPECT_THROW(weighted_norms(fa, fb, a.marginals(), 0.75, 2.0, 0, 10), GridMismatch);
}

TEST(Norms, ZeroForEqualFieldsAndScaleLinearly) {
    const BsdeSolver s(anticipative(), TimeGrid(1.25, 50), {100, 6.0});
    const SolutionField a = s.terminal_extension();
    SolutionField b = a;
    EXPECT_EQ(weighted_norms(a, b, s.marginals(), 0.75, 2.0, 0, 40).combined(), 0.0);
    for (std::size_t k = 0; k < b.rows(); ++k) {
        for (double& v : b.u(k)) v += 1.0;
    }
    // int_0^1 e^{2t} dt for a unit shift in u
    const NormPair n = weighted_norms(a, b, s.marginals(), 0.75, 2.0, 0, 40);
    EXPECT_NEAR(n.y * n.y, 0.5 * (std::exp(2.0) - 1.0), 1e-3);
    EXPECT_EQ(n.z, 0.0);
}

TEST(Picard, WindowHeuristic) {
    ModelSpec m = anticipative();
    EXPECT_EQ(heuristic_windows(m), 64u);
    m.driver = DriverSpec::linear(0, 0, 0, 0, 0, 0);
    EXPECT_EQ(heuristic_windows(m), 1u);
}

TEST(Picard, TraceCsvAndApriori) {
    const BsdeSolver s(anticipative(), TimeGrid(1.25, 50), {100, 6.0});
    const auto r = picard_solve(s, {.windows = 4});
    EXPECT_EQ(r.trace.windows.size(), 4u);
    EXPECT_DOUBLE_EQ(r.trace.windows.front().t_lo, 0.0);
    std::ostringstream os;
    write_csv(os, r.trace);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "window,iteration,norm_Y,norm_Z");
    const AprioriReport ap = apriori_report(r.field, s.model(), s.marginals(), 2.0);
    ASSERT_TRUE(ap.ratio.has_value());
    EXPECT_GT(*ap.ratio, 0.0);
    EXPECT_TRUE(std::isfinite(*ap.ratio));
    for (std::size_t k = 0; k < ap.t.size(); ++k) EXPECT_GE(ap.lhs[k], 0.0);
}

TEST(Picard, RejectsBadOptions) {
    const BsdeSolver s(anticipative(), TimeGrid(1.25, 50), {100, 6.0});
    EXPECT_THROW(picard_solve(s, {.tol = 0.0}), DomainError);
    EXPECT_THROW(picard_solve(s, {.max_iter = 0}), DomainError);
}
