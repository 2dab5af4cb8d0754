// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "fbsde/error.hpp"

namespace fbsde {

/// Uniform time grid t_k = k * dt on [0, t_end].
class TimeGrid {
public:
    TimeGrid(double t_end, std::size_t n_steps) : t_end_(t_end), n_steps_(n_steps) {
        if (!(t_end > 0.0) || !std::isfinite(t_end))
            throw DomainError("TimeGrid: t_end must be positive and finite");
        if (n_steps == 0) throw DomainError("TimeGrid: n_steps must be positive");
    }

    double t_end() const noexcept { return t_end_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return t_end_ / static_cast<double>(n_steps_); }
    double time(std::size_t k) const noexcept {
        return k == n_steps_ ? t_end_ : static_cast<double>(k) * dt();
    }

    /// Index of the node equal to t, or throws if t is not a node.
    std::size_t node_index(double t, double rel_tol = 1e-9) const {
        const double pos = t / dt();
        const double rounded = std::round(pos);
        if (t < -rel_tol * t_end_ || rounded > static_cast<double>(n_steps_) ||
            std::abs(pos - rounded) > rel_tol * static_cast<double>(n_steps_))
            throw DomainError("time " + std::to_string(t) + " is not a grid node");
        return static_cast<std::size_t>(rounded);
    }

    /// Nearest node to t, clamped to the grid.
    std::size_t nearest_index(double t) const noexcept {
        const double pos = std::round(t / dt());
        if (pos <= 0.0) return 0;
        if (pos >= static_cast<double>(n_steps_)) return n_steps_;
        return static_cast<std::size_t>(pos);
    }

    /// Every factor-th node of this grid.
    TimeGrid coarsened(std::size_t factor) const {
        if (factor == 0 || n_steps_ % factor != 0)
            throw GridMismatch("TimeGrid::coarsened: factor must divide n_steps");
        return TimeGrid(t_end_, n_steps_ / factor);
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double t_end_;
    std::size_t n_steps_;
};

/// Uniform space grid x_i = x_min + i * dx, i = 0..n_intervals.
class SpaceGrid {
public:
    SpaceGrid(double x_min, double x_max, std::size_t n_intervals)
        : x_min_(x_min), x_max_(x_max), n_(n_intervals) {
        if (!(x_max > x_min)) throw DomainError("SpaceGrid: x_max must exceed x_min");
        if (n_intervals < 4) throw DomainError("SpaceGrid: need at least 4 intervals");
    }

    double x_min() const noexcept { return x_min_; }
    double x_max() const noexcept { return x_max_; }
    std::size_t n_intervals() const noexcept { return n_; }
    std::size_t size() const noexcept { return n_ + 1; }
    double dx() const noexcept { return (x_max_ - x_min_) / static_cast<double>(n_); }
    double x(std::size_t i) const noexcept {
        return i == n_ ? x_max_ : x_min_ + static_cast<double>(i) * dx();
    }

    bool operator==(const SpaceGrid&) const = default;

private:
    double x_min_;
    double x_max_;
    std::size_t n_;
};

}  // namespace fbsde
