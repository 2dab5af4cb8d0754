// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/format.hpp"
#include "fbsde/grid.hpp"

namespace fbsde {

/// Fields u (for Y) and z (for Z) on the (time x space) grid, row k holding
/// time t_k. Y_t = u(t, eta_t), Z_t = z(t, eta_t).
class SolutionField {
public:
    SolutionField(TimeGrid time, SpaceGrid space, std::size_t k_T)
        : time_(time), space_(space), k_T_(k_T), u_(time.size() * space.size(), 0.0),
          z_(u_.size(), 0.0) {
        if (k_T > time.n_steps()) throw GridMismatch("SolutionField: terminal index outside the grid");
    }

    const TimeGrid& time_grid() const noexcept { return time_; }
    const SpaceGrid& space_grid() const noexcept { return space_; }
    /// Index of the node t = T; rows k >= k_T hold the terminal data.
    std::size_t k_T() const noexcept { return k_T_; }
    std::size_t rows() const noexcept { return time_.size(); }
    std::size_t cols() const noexcept { return space_.size(); }

    std::span<double> u(std::size_t k) { return {u_.data() + k * cols(), cols()}; }
    std::span<double> z(std::size_t k) { return {z_.data() + k * cols(), cols()}; }
    std::span<const double> u(std::size_t k) const { return {u_.data() + k * cols(), cols()}; }
    std::span<const double> z(std::size_t k) const { return {z_.data() + k * cols(), cols()}; }
    double u(std::size_t k, std::size_t i) const { return u_[k * cols() + i]; }
    double z(std::size_t k, std::size_t i) const { return z_[k * cols() + i]; }

    void copy_rows(const SolutionField& other, std::size_t lo, std::size_t hi) {
        check_same(other);
        std::copy(other.u_.begin() + std::ptrdiff_t(lo * cols()), other.u_.begin() + std::ptrdiff_t(hi * cols()),
                  u_.begin() + std::ptrdiff_t(lo * cols()));
        std::copy(other.z_.begin() + std::ptrdiff_t(lo * cols()), other.z_.begin() + std::ptrdiff_t(hi * cols()),
                  z_.begin() + std::ptrdiff_t(lo * cols()));
    }

    void check_same(const SolutionField& other) const {
        if (!(time_ == other.time_) || !(space_ == other.space_) || k_T_ != other.k_T_)
            throw GridMismatch("solution fields live on different grids");
    }

    /// Largest |u_a - u_b| and |z_a - z_b| over rows [lo, hi).
    std::pair<double, double> max_difference(const SolutionField& other, std::size_t lo,
                                             std::size_t hi) const {
        check_same(other);
        double du = 0.0, dz = 0.0;
        for (std::size_t j = lo * cols(); j < hi * cols(); ++j) {
            du = std::max(du, std::abs(u_[j] - other.u_[j]));
            dz = std::max(dz, std::abs(z_[j] - other.z_[j]));
        }
        return {du, dz};
    }

    bool operator==(const SolutionField&) const = default;

private:
    TimeGrid time_;
    SpaceGrid space_;
    std::size_t k_T_;
    std::vector<double> u_;
    std::vector<double> z_;
};

/// Linear interpolation of a grid slice, extended linearly outside.
inline double interpolate_linear(const SpaceGrid& grid, std::span<const double> slice, double x) {
    const std::size_t n = grid.n_intervals();
    const double pos = (x - grid.x_min()) / grid.dx();
    const std::size_t j = pos <= 0.0 ? 0 : pos >= double(n - 1) ? n - 1 : std::size_t(pos);
    const double w = pos - double(j);
    return slice[j] + w * (slice[j + 1] - slice[j]);
}

/// Four-point Lagrange interpolation, exact for cubics; outside the grid the
/// end stencil is used.
inline double interpolate_cubic(const SpaceGrid& grid, std::span<const double> slice, double x) {
    const std::size_t n = grid.n_intervals();
    const double pos = (x - grid.x_min()) / grid.dx();
    const double fl = std::floor(pos);
    const long base = std::clamp<long>(long(fl) - 1, 0, long(n) - 3);
    const double s = pos - double(base);
    const double f0 = slice[std::size_t(base)], f1 = slice[std::size_t(base + 1)];
    const double f2 = slice[std::size_t(base + 2)], f3 = slice[std::size_t(base + 3)];
    return -f0 * (s - 1) * (s - 2) * (s - 3) / 6.0 + f1 * s * (s - 2) * (s - 3) / 2.0 -
           f2 * s * (s - 1) * (s - 3) / 2.0 + f3 * s * (s - 1) * (s - 2) / 6.0;
}

/// Second-order first derivative: central inside, one-sided at the ends.
inline void derivative(const SpaceGrid& grid, std::span<const double> f, std::span<double> out) {
    const std::size_t n = grid.n_intervals();
    const double inv = 1.0 / (2.0 * grid.dx());
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv;
    for (std::size_t i = 1; i < n; ++i) out[i] = (f[i + 1] - f[i - 1]) * inv;
    out[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) * inv;
}

/// CSV with columns t, x, u, z, one record per node.
inline void write_csv(std::ostream& os, const SolutionField& field) {
    os << "t,x,u,z\n";
    for (std::size_t k = 0; k < field.rows(); ++k)
        for (std::size_t i = 0; i < field.cols(); ++i) {
            const double row[] = {field.time_grid().time(k), field.space_grid().x(i), field.u(k, i),
                                  field.z(k, i)};
            write_csv_row(os, row);
        }
}

}  // namespace fbsde
