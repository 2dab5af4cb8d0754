// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "fbsde/error.hpp"
#include "fbsde/format.hpp"
#include "fbsde/grid.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

inline void require_hurst(double hurst) {
    if (!(hurst > 0.5 && hurst < 1.0))
        throw DomainError("Hurst index must lie in (1/2, 1), got " + format_double(hurst));
}

/// E(B_t B_s) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2.
inline double covariance(double t, double s, double hurst) {
    require_hurst(hurst);
    if (t < 0.0 || s < 0.0) throw DomainError("covariance: times must be nonnegative");
    const double h2 = 2.0 * hurst;
    return 0.5 * (std::pow(t, h2) + std::pow(s, h2) - std::pow(std::abs(t - s), h2));
}

/// Autocovariance of unit-step fractional Gaussian noise at lag k.
inline double fgn_autocovariance(std::size_t lag, double hurst) {
    const double k = static_cast<double>(lag);
    const double h2 = 2.0 * hurst;
    if (lag == 0) return 1.0;
    return 0.5 * (std::pow(k + 1.0, h2) - 2.0 * std::pow(k, h2) + std::pow(k - 1.0, h2));
}

/// Gram matrix of the covariance at all grid nodes, t = 0 included.
inline Eigen::MatrixXd covariance_matrix(const TimeGrid& grid, double hurst) {
    require_hurst(hurst);
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            c(i, j) = c(j, i) = covariance(grid.time(static_cast<std::size_t>(i)),
                                           grid.time(static_cast<std::size_t>(j)), hurst);
    return c;
}

/// Lower Cholesky factor of the covariance restricted to t > 0. Retries once
/// with 1e-12 * max-diagonal jitter, then fails.
inline Eigen::MatrixXd covariance_cholesky(const TimeGrid& grid, double hurst) {
    const Eigen::MatrixXd full = covariance_matrix(grid, hurst);
    const Eigen::Index n = full.rows() - 1;
    Eigen::MatrixXd inner = full.bottomRightCorner(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(inner);
    if (llt.info() != Eigen::Success) {
        inner.diagonal().array() += 1e-12 * inner.diagonal().maxCoeff();
        llt.compute(inner);
        if (llt.info() != Eigen::Success)
            throw NumericalError("covariance_cholesky: matrix not positive definite after jitter");
    }
    return llt.matrixL();
}

enum class Sampler { automatic, cholesky, circulant };

inline constexpr std::size_t cholesky_max_steps = 2048;

/// Sample paths (or any family of processes) on a time grid, stored row-major
/// with one row per path.
class PathSet {
public:
    PathSet(TimeGrid grid, std::size_t n_paths)
        : grid_(grid), n_paths_(n_paths), values_(n_paths * grid.size(), 0.0) {
        if (n_paths == 0) throw DomainError("PathSet: n_paths must be positive");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::span<const double> path(std::size_t p) const {
        return {values_.data() + p * grid_.size(), grid_.size()};
    }
    std::span<double> path(std::size_t p) { return {values_.data() + p * grid_.size(), grid_.size()}; }
    double operator()(std::size_t p, std::size_t k) const { return values_[p * grid_.size() + k]; }
    std::span<const double> values() const noexcept { return values_; }

    /// Same paths observed on every factor-th node.
    PathSet coarsened(std::size_t factor) const {
        PathSet out(grid_.coarsened(factor), n_paths_);
        for (std::size_t p = 0; p < n_paths_; ++p) {
            auto src = path(p);
            auto dst = out.path(p);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = src[k * factor];
        }
        return out;
    }

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    std::vector<double> values_;
};

/// Seeded ensemble of fractional Brownian motion paths, B_0 = 0.
class PathBatch {
public:
    PathBatch(PathSet paths, double hurst, std::uint64_t seed)
        : paths_(std::move(paths)), hurst_(hurst), seed_(seed) {}

    const TimeGrid& grid() const noexcept { return paths_.grid(); }
    double hurst() const noexcept { return hurst_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t n_paths() const noexcept { return paths_.n_paths(); }
    std::span<const double> path(std::size_t p) const { return paths_.path(p); }
    double operator()(std::size_t p, std::size_t k) const { return paths_(p, k); }
    const PathSet& paths() const noexcept { return paths_; }

    PathBatch coarsened(std::size_t factor) const {
        return PathBatch(paths_.coarsened(factor), hurst_, seed_);
    }

private:
    PathSet paths_;
    double hurst_;
    std::uint64_t seed_;
};

namespace detail {

inline void sample_cholesky(PathSet& out, double hurst, std::uint64_t seed) {
    const Eigen::MatrixXd lower = covariance_cholesky(out.grid(), hurst);
    const Eigen::Index n = lower.rows();
    constexpr std::size_t block = 256;
    for (std::size_t p0 = 0; p0 < out.n_paths(); p0 += block) {
        const std::size_t m = std::min(block, out.n_paths() - p0);
        Eigen::MatrixXd z(n, static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j) {
            CounterRng rng(seed, p0 + j);
            for (Eigen::Index i = 0; i < n; ++i) z(i, static_cast<Eigen::Index>(j)) = rng.normal();
        }
        const Eigen::MatrixXd x = lower.triangularView<Eigen::Lower>() * z;
        for (std::size_t j = 0; j < m; ++j) {
            auto dst = out.path(p0 + j);
            dst[0] = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                dst[static_cast<std::size_t>(i) + 1] = x(i, static_cast<Eigen::Index>(j));
        }
    }
}

// Davies-Harte: embed the fGn autocovariance in a circulant of power-of-two
// size m >= 2n, diagonalize by FFT, colour complex white noise.
inline void sample_circulant(PathSet& out, double hurst, std::uint64_t seed) {
    const std::size_t n = out.grid().n_steps();
    std::size_t m = 1;
    while (m < 2 * n) m <<= 1;
    std::vector<std::complex<double>> row(m), spectrum(m);
    for (std::size_t j = 0; j <= m / 2; ++j) {
        const double c = fgn_autocovariance(j, hurst);
        row[j] = c;
        if (j > 0 && j < m / 2) row[m - j] = c;
    }
    Eigen::FFT<double> fft;
    fft.fwd(spectrum, row);
    double lambda_max = 0.0, lambda_min = 0.0;
    for (const auto& v : spectrum) {
        lambda_max = std::max(lambda_max, v.real());
        lambda_min = std::min(lambda_min, v.real());
    }
    if (lambda_min < -1e-10 * lambda_max)
        throw NumericalError("circulant embedding has a negative eigenvalue");
    std::vector<double> scale(m);
    for (std::size_t j = 0; j < m; ++j)
        scale[j] = std::sqrt(std::max(spectrum[j].real(), 0.0) / static_cast<double>(m));

    const double step_scale = std::pow(out.grid().dt(), hurst);
    std::vector<std::complex<double>> noise(m), colored(m);
    for (std::size_t p = 0; p < out.n_paths(); ++p) {
        CounterRng rng(seed, p);
        for (std::size_t j = 0; j < m; ++j) {
            const double re = rng.normal();
            const double im = rng.normal();
            noise[j] = {scale[j] * re, scale[j] * im};
        }
        fft.fwd(colored, noise);
        auto dst = out.path(p);
        dst[0] = 0.0;
        for (std::size_t k = 0; k < n; ++k) dst[k + 1] = dst[k] + step_scale * colored[k].real();
    }
}

}  // namespace detail

/// Exact-in-distribution fBm sampler. `automatic` uses Cholesky up to 2048
/// steps and circulant embedding beyond. Output is a pure function of
/// (grid, hurst, n_paths, seed, sampler).
inline PathBatch sample_paths(const TimeGrid& grid, double hurst, std::size_t n_paths,
                              std::uint64_t seed, Sampler sampler = Sampler::automatic) {
    require_hurst(hurst);
    PathSet paths(grid, n_paths);
    if (sampler == Sampler::automatic)
        sampler = grid.n_steps() <= cholesky_max_steps ? Sampler::cholesky : Sampler::circulant;
    if (sampler == Sampler::cholesky)
        detail::sample_cholesky(paths, hurst, seed);
    else
        detail::sample_circulant(paths, hurst, seed);
    return PathBatch(std::move(paths), hurst, seed);
}

struct CovarianceCheck {
    std::size_t entries = 0;
    std::size_t passed = 0;
    double max_z_score = 0.0;
    double pass_fraction() const { return entries ? double(passed) / double(entries) : 0.0; }
};

/// Compares the empirical covariance (known zero mean) with the closed form at
/// all pairs of nodes with t > 0; an entry passes when within `n_se` standard
/// errors, the standard error being estimated from the sample.
inline CovarianceCheck check_covariance(const PathBatch& batch, double n_se = 3.0) {
    const std::size_t n = batch.grid().n_steps();
    const auto np = static_cast<Eigen::Index>(batch.n_paths());
    Eigen::MatrixXd x(np, static_cast<Eigen::Index>(n));
    for (Eigen::Index p = 0; p < np; ++p)
        for (std::size_t k = 0; k < n; ++k)
            x(p, static_cast<Eigen::Index>(k)) = batch(static_cast<std::size_t>(p), k + 1);
    const Eigen::MatrixXd m1 = (x.transpose() * x) / double(np);
    const Eigen::MatrixXd sq = x.array().square().matrix();
    const Eigen::MatrixXd m2 = (sq.transpose() * sq) / double(np);
    CovarianceCheck out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            const double target =
                covariance(batch.grid().time(i + 1), batch.grid().time(j + 1), batch.hurst());
            const double var = std::max(m2(ii, jj) - m1(ii, jj) * m1(ii, jj), 0.0);
            const double se = std::sqrt(var / double(np));
            const double z = se > 0.0 ? std::abs(m1(ii, jj) - target) / se : 0.0;
            out.max_z_score = std::max(out.max_z_score, z);
            ++out.entries;
            if (z <= n_se) ++out.passed;
        }
    }
    return out;
}

/// One row per path; a leading comment line carries hurst, seed and dt, the
/// second line lists the node times.
inline void write_csv(std::ostream& os, const PathBatch& batch) {
    os << "# hurst=" << format_double(batch.hurst()) << " seed=" << batch.seed()
       << " dt=" << format_double(batch.grid().dt()) << '\n';
    std::vector<double> times(batch.grid().size());
    for (std::size_t k = 0; k < times.size(); ++k) times[k] = batch.grid().time(k);
    write_csv_row(os, times);
    for (std::size_t p = 0; p < batch.n_paths(); ++p) write_csv_row(os, batch.path(p));
}

}  // namespace fbsde
