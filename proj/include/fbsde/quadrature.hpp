// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fbsde {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// are mu0 times the squared first eigenvector components.
inline QuadratureRule golub_welsch(std::size_t n, double mu0, double (*offdiag)(std::size_t)) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                   static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        jacobi(i, i - 1) = jacobi(i - 1, i) = offdiag(k);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        rule.nodes[k] = solver.eigenvalues()(i);
        const double v0 = solver.eigenvectors()(0, i);
        rule.weights[k] = mu0 * v0 * v0;
    }
    return rule;
}

}  // namespace detail

/// Gauss-Legendre rule mapped to [0, 1].
inline const QuadratureRule& gauss_legendre_unit() {
    static const QuadratureRule rule20 = [] {
        auto r = detail::golub_welsch(20, 2.0, [](std::size_t k) {
            const double kk = static_cast<double>(k);
            return kk / std::sqrt(4.0 * kk * kk - 1.0);
        });
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            r.nodes[i] = 0.5 * (r.nodes[i] + 1.0);
            r.weights[i] *= 0.5;
        }
        return r;
    }();
    return rule20;
}

/// Gauss-Hermite rule for the standard normal law: sum w_i f(z_i) ~ E f(Z).
inline const QuadratureRule& gauss_hermite_normal() {
    static const QuadratureRule rule = detail::golub_welsch(
        40, 1.0, [](std::size_t k) { return std::sqrt(static_cast<double>(k)); });
    return rule;
}

/// Pairwise summation; the reduction tree depends only on the length.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline constexpr double inv_sqrt2 = 0.70710678118654752440;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * inv_sqrt2); }

/// Upper tail 1 - Phi(x), accurate for large positive x.
inline double normal_sf(double x) { return 0.5 * std::erfc(x * inv_sqrt2); }

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

}  // namespace fbsde
