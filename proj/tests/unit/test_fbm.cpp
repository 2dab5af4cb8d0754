#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "fbsde/fbm.hpp"

using namespace fbsde;

TEST(Covariance, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(covariance(1.0, 1.0, 0.75), 1.0);
    // 0.5 * (1 + 0.5^1.5 - 0.5^1.5)
    EXPECT_NEAR(covariance(1.0, 0.5, 0.75), 0.5, 1e-15);
    EXPECT_NEAR(covariance(0.5, 0.5, 0.6), std::pow(0.5, 1.2), 1e-15);
    EXPECT_DOUBLE_EQ(covariance(0.0, 0.7, 0.8), 0.0);
    EXPECT_DOUBLE_EQ(covariance(0.3, 0.7, 0.8), covariance(0.7, 0.3, 0.8));
}

TEST(Covariance, IncrementAutocovariance) {
    EXPECT_DOUBLE_EQ(fgn_autocovariance(0, 0.75), 1.0);
    // Cov(B_2 - B_1, B_1) = 0.5 * (2^{2H} - 2)
    EXPECT_NEAR(fgn_autocovariance(1, 0.75), 0.5 * (std::pow(2.0, 1.5) - 2.0), 1e-15);
    EXPECT_GT(fgn_autocovariance(5, 0.9), 0.0);
}

TEST(Covariance, RejectsHurstOutsideRange) {
    EXPECT_THROW(require_hurst(0.5), DomainError);
    EXPECT_THROW(require_hurst(1.0), DomainError);
    EXPECT_THROW(sample_paths(TimeGrid(1.0, 8), 0.4, 4, 1), DomainError);
    EXPECT_NO_THROW(require_hurst(0.51));
}

TEST(Covariance, CholeskyReproducesMatrix) {
    const TimeGrid grid(1.0, 16);
    const Eigen::MatrixXd full = covariance_matrix(grid, 0.7);
    const Eigen::MatrixXd l = covariance_cholesky(grid, 0.7);
    const Eigen::MatrixXd inner = full.bottomRightCorner(16, 16);
    EXPECT_LT((l * l.transpose() - inner).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampling, PathsStartAtZeroAndAreDeterministic) {
    const TimeGrid grid(1.0, 32);
    const PathBatch a = sample_paths(grid, 0.75, 50, 42);
    const PathBatch b = sample_paths(grid, 0.75, 50, 42);
    const PathBatch c = sample_paths(grid, 0.75, 50, 43);
    for (std::size_t p = 0; p < a.n_paths(); ++p) EXPECT_EQ(a(p, 0), 0.0);
    EXPECT_TRUE(std::equal(a.paths().values().begin(), a.paths().values().end(), b.paths().values().begin()));
    EXPECT_NE(a(3, 10), c(3, 10));
}

TEST(Sampling, PathCountDoesNotChangeEarlierPaths) {
    const TimeGrid grid(1.0, 64);
    for (Sampler s : {Sampler::cholesky, Sampler::circulant}) {
        const PathBatch small = sample_paths(grid, 0.8, 3, 9, s);
        const PathBatch big = sample_paths(grid, 0.8, 300, 9, s);
        for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_EQ(small(2, k), big(2, k));
    }
}

class SamplerCovariance : public ::testing::TestWithParam<std::tuple<Sampler, double>> {};

TEST_P(SamplerCovariance, MatchesClosedForm) {
    const auto [sampler, hurst] = GetParam();
    const PathBatch batch = sample_paths(TimeGrid(1.0, 32), hurst, 6000, 5, sampler);
    const CovarianceCheck check = check_covariance(batch);
    EXPECT_EQ(check.entries, 32u * 33u / 2u);
    EXPECT_GE(check.pass_fraction(), 0.95);
}

INSTANTIATE_TEST_SUITE_P(Both, SamplerCovariance,
                         ::testing::Combine(::testing::Values(Sampler::cholesky, Sampler::circulant),
                                            ::testing::Values(0.6, 0.9)),
                         [](const auto& info) {
                             const bool chol = std::get<0>(info.param) == Sampler::cholesky;
                             return std::string(chol ? "Cholesky" : "Circulant") + "_H" +
                                    std::to_string(int(std::lround(10 * std::get<1>(info.param))));
                         });

TEST(Sampling, CirculantScalesWithHorizon) {
    // Var(B_T) = T^{2H} on a non-unit horizon.
    const PathBatch batch = sample_paths(TimeGrid(2.0, 128), 0.75, 8000, 3, Sampler::circulant);
    double s2 = 0.0;
    for (std::size_t p = 0; p < batch.n_paths(); ++p) s2 += batch(p, 128) * batch(p, 128);
    const double var = s2 / double(batch.n_paths());
    const double target = std::pow(2.0, 1.5);
    EXPECT_NEAR(var, target, 4.0 * target * std::sqrt(2.0 / 8000.0));
}

TEST(Sampling, CoarsenedKeepsEveryFactorNode) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 16), 0.7, 4, 1);
    const PathBatch c = batch.coarsened(4);
    EXPECT_EQ(c.grid().n_steps(), 4u);
    EXPECT_EQ(c(1, 2), batch(1, 8));
    EXPECT_THROW(batch.coarsened(3), GridMismatch);
}

TEST(Sampling, CsvHeader) {
    const PathBatch batch = sample_paths(TimeGrid(1.0, 4), 0.75, 2, 7);
    std::ostringstream os;
    write_csv(os, batch);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "# hurst=0.75 seed=7 dt=0.25");
    std::getline(in, line);
    EXPECT_EQ(line, "0,0.25,0.5,0.75,1");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST(Rng, StreamsAreIndependentOfOrder) {
    CounterRng a(1, 5), b(1, 5), c(1, 6);
    EXPECT_EQ(a.next(), b.next());
    EXPECT_NE(a.next(), c.next());
    double s = 0.0, s2 = 0.0;
    CounterRng r(99, 0);
    for (int i = 0; i < 20000; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / 20000, 0.0, 0.03);
    EXPECT_NEAR(s2 / 20000, 1.0, 0.04);
}
