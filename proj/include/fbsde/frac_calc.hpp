// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fbsde/error.hpp"
#include "fbsde/fbm.hpp"
#include "fbsde/format.hpp"
#include "fbsde/grid.hpp"
#include "fbsde/quadrature.hpp"

namespace fbsde {

/// phi(x) = H(2H-1)|x|^{2H-2}. Singular at 0; the singularity is only ever
/// integrated, never evaluated.
inline double phi(double x, double hurst) {
    require_hurst(hurst);
    if (x == 0.0) throw DomainError("phi: kernel is singular at 0");
    return hurst * (2.0 * hurst - 1.0) * std::pow(std::abs(x), 2.0 * hurst - 2.0);
}

/// Exact cell integrals of |w + d|^alpha, alpha = 2H - 2, against polynomials.
/// Cells adjacent to the singularity use closed-form antiderivatives; all
/// other cells are smooth and use a 20-point Gauss-Legendre rule (the
/// binomial closed form cancels catastrophically far from the diagonal).
class SingularKernel {
public:
    explicit SingularKernel(double hurst) : hurst_(hurst), alpha_(2.0 * hurst - 2.0) {
        require_hurst(hurst);
    }

    double hurst() const noexcept { return hurst_; }
    double alpha() const noexcept { return alpha_; }

    /// Integral over w in [0, 1] of |w + d|^alpha * w^m, m <= 3.
    double cell_moment(long d, int m) const {
        if (d == 0 || d == -1) return closed_moment(d, m);
        const auto& gl = gauss_legendre_unit();
        double s = 0.0;
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            const double w = gl.nodes[i];
            s += gl.weights[i] * std::pow(std::abs(w + double(d)), alpha_) * std::pow(w, m);
        }
        return s;
    }

    /// Integral over the unit square of |s - r + d|^alpha * l_a(s) * l_b(r),
    /// with l_0(s) = 1 - s and l_1(s) = s the local linear basis.
    double pair_weight(int a, int b, long d) const {
        const auto& qab = overlap_poly(a, b);
        const auto& qba = overlap_poly(b, a);
        double s = 0.0;
        for (int m = 0; m < 4; ++m) {
            if (qab[m] != 0.0) s += qab[m] * cell_moment(d, m);
            if (qba[m] != 0.0) s += qba[m] * cell_moment(-d, m);
        }
        return s;
    }

private:
    using Poly = std::array<double, 4>;

    double antiderivative(double y, int j) const {
        if (y == 0.0) return 0.0;
        const double e = alpha_ + j + 1.0;
        const double sign = (y > 0.0 || (j + 1) % 2 == 0) ? 1.0 : -1.0;
        return sign * std::pow(std::abs(y), e) / e;
    }

    double closed_moment(long d, int m) const {
        static constexpr int binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
        const double shift = -double(d);
        double s = 0.0;
        for (int j = 0; j <= m; ++j) {
            const double coeff = binom[m][j] * std::pow(shift, m - j);
            if (coeff == 0.0) continue;
            s += coeff * (antiderivative(double(d) + 1.0, j) - antiderivative(double(d), j));
        }
        return s;
    }

    // Q_ab(w) = integral over r in [0, 1-w] of l_a(r + w) l_b(r), w in [0, 1],
    // as coefficients in w.
    static const Poly& overlap_poly(int a, int b) {
        static const std::array<Poly, 4> table = [] {
            auto mul = [](const Poly& p, const Poly& q) {
                Poly r{};
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; i + j < 4; ++j) r[i + j] += p[i] * q[j];
                return r;
            };
            auto lin = [](const Poly& p, double cp, const Poly& q, double cq) {
                Poly r{};
                for (int i = 0; i < 4; ++i) r[i] = cp * p[i] + cq * q[i];
                return r;
            };
            const Poly w{0, 1, 0, 0}, l{1, -1, 0, 0};
            const Poly l2 = mul(l, l), l3 = mul(l2, l), wl = mul(w, l), wl2 = mul(w, l2);
            const Poly q11 = lin(l3, 1.0 / 3.0, wl2, 0.5);
            const Poly q10 = lin(lin(l2, 0.5, wl, 1.0), 1.0, lin(l3, -1.0 / 3.0, wl2, -0.5), 1.0);
            const Poly q01 = lin(l3, 1.0 / 6.0, l2, 0.0);
            const Poly q00 = lin(l2, 0.5, l3, -1.0 / 6.0);
            return std::array<Poly, 4>{q00, q01, q10, q11};
        }();
        return table[static_cast<std::size_t>(2 * a + b)];
    }

    double hurst_;
    double alpha_;
};

/// Product-integration operator for <xi, eta>_t on a uniform grid, with
/// xi and eta interpolated piecewise-linearly between nodes.
class InnerProduct {
public:
    InnerProduct(const TimeGrid& grid, double hurst)
        : grid_(grid), hurst_(hurst), kernel_(hurst), n_(grid.n_steps()) {
        const std::size_t span = 2 * n_ - 1;
        for (auto& t : pair_) t.resize(span);
        for (long d = -long(n_) + 1; d <= long(n_) - 1; ++d)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    pair_[2 * a + b][static_cast<std::size_t>(d + long(n_) - 1)] =
                        kernel_.pair_weight(a, b, d);
        scale_ = hurst * (2.0 * hurst - 1.0) * std::pow(grid.dt(), 2.0 * hurst);
    }

    const TimeGrid& grid() const noexcept { return grid_; }

    /// <xi, eta>_{t_k}.
    double operator()(std::span<const double> xi, std::span<const double> eta, std::size_t k) const {
        check(xi, eta);
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = 0; q < k; ++q) s += cell_pair(xi, eta, p, q);
        return scale_ * s;
    }

    /// <xi, eta>_{t_k} for every node k, in O(n^2).
    std::vector<double> profile(std::span<const double> xi, std::span<const double> eta) const {
        check(xi, eta);
        std::vector<double> out(n_ + 1, 0.0);
        for (std::size_t k = 0; k < n_; ++k) {
            double cross = cell_pair(xi, eta, k, k);
            for (std::size_t q = 0; q < k; ++q)
                cross += cell_pair(xi, eta, k, q) + cell_pair(xi, eta, q, k);
            out[k + 1] = out[k] + scale_ * cross;
        }
        return out;
    }

private:
    void check(std::span<const double> xi, std::span<const double> eta) const {
        if (xi.size() != grid_.size() || eta.size() != grid_.size())
            throw GridMismatch("inner_product: sampled functions must match the grid");
    }

    double weight(int ab, long d) const { return pair_[ab][static_cast<std::size_t>(d + long(n_) - 1)]; }

    double cell_pair(std::span<const double> xi, std::span<const double> eta, std::size_t p,
                     std::size_t q) const {
        const long d = long(p) - long(q);
        return xi[p] * (eta[q] * weight(0, d) + eta[q + 1] * weight(1, d)) +
               xi[p + 1] * (eta[q] * weight(2, d) + eta[q + 1] * weight(3, d));
    }

    TimeGrid grid_;
    double hurst_;
    SingularKernel kernel_;
    std::size_t n_;
    double scale_ = 0.0;
    std::array<std::vector<double>, 4> pair_;
};

/// <xi, eta>_{t_k}, t_k the k-th node of the grid.
inline double inner_product(std::span<const double> xi, std::span<const double> eta,
                            const TimeGrid& grid, std::size_t k, double hurst) {
    if (k > grid.n_steps()) throw GridMismatch("inner_product: node index out of range");
    return InnerProduct(grid, hurst)(xi, eta, k);
}

/// f_hat(t_k) = integral over [0, t_k] of phi(t_k - v) f(v) dv for piecewise-linear f.
inline std::vector<double> hat_transform(const TimeGrid& grid, std::span<const double> f,
                                         double hurst) {
    if (f.size() != grid.size()) throw GridMismatch("hat_transform: size mismatch");
    const SingularKernel kernel(hurst);
    const std::size_t n = grid.n_steps();
    std::vector<double> m0(n + 1), m1(n + 1);
    for (std::size_t e = 1; e <= n; ++e) {
        m0[e] = kernel.cell_moment(-long(e), 0);
        m1[e] = kernel.cell_moment(-long(e), 1);
    }
    const double scale = hurst * (2.0 * hurst - 1.0) * std::pow(grid.dt(), 2.0 * hurst - 1.0);
    std::vector<double> out(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        double s = 0.0;
        for (std::size_t q = 0; q < k; ++q) {
            const std::size_t e = k - q;
            s += f[q] * (m0[e] - m1[e]) + f[q + 1] * m1[e];
        }
        out[k] = scale * s;
    }
    return out;
}

/// sigma-derived tables on a time grid.
struct KernelTable {
    TimeGrid grid;
    double hurst;
    std::vector<double> sigma;
    std::vector<double> sigma_hat;
    std::vector<double> sigma_norm_sq;
    std::vector<double> diffusion;

    /// Smallest M with t^{2H-1}/M <= sigma_hat/sigma <= M t^{2H-1} at all
    /// nodes t > 0.
    double ratio_bound() const {
        double m = 1.0;
        for (std::size_t k = 1; k < grid.size(); ++k) {
            const double ref = std::pow(grid.time(k), 2.0 * hurst - 1.0);
            const double r = sigma_hat[k] / sigma[k];
            m = std::max({m, r / ref, ref / r});
        }
        return m;
    }

    /// Max relative gap between the central difference of sigma_norm_sq and
    /// 2 * diffusion over nodes with t >= t_min.
    double derivative_consistency(double t_min) const {
        double worst = 0.0;
        const double h = grid.dt();
        for (std::size_t k = 1; k + 1 < grid.size(); ++k) {
            if (grid.time(k) < t_min) continue;
            const double fd = (sigma_norm_sq[k + 1] - sigma_norm_sq[k - 1]) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - 2.0 * diffusion[k]) / std::abs(2.0 * diffusion[k]));
        }
        return worst;
    }
};

inline KernelTable build_kernel_table(const TimeGrid& grid, std::span<const double> sigma,
                                      double hurst) {
    require_hurst(hurst);
    if (sigma.size() != grid.size()) throw GridMismatch("build_kernel_table: size mismatch");
    const bool positive = sigma[grid.size() - 1] > 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (!std::isfinite(sigma[k]) || sigma[k] == 0.0 || (sigma[k] > 0.0) != positive)
            throw DomainError("sigma must be nonzero and of one sign on (0, T+K]; fails at t=" +
                              format_double(grid.time(k)));
    }
    KernelTable table{grid, hurst, {sigma.begin(), sigma.end()}, {}, {}, {}};
    table.sigma_hat = hat_transform(grid, sigma, hurst);
    table.sigma_hat[0] = 0.0;
    table.sigma_norm_sq = InnerProduct(grid, hurst).profile(sigma, sigma);
    table.diffusion.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
        table.diffusion[k] = table.sigma_hat[k] * table.sigma[k];
    return table;
}

inline void write_csv(std::ostream& os, const KernelTable& table) {
    os << "t,sigma,sigma_hat,sigma_norm_sq,diffusion\n";
    for (std::size_t k = 0; k < table.grid.size(); ++k) {
        const double row[] = {table.grid.time(k), table.sigma[k], table.sigma_hat[k],
                              table.sigma_norm_sq[k], table.diffusion[k]};
        write_csv_row(os, row);
    }
}

/// Exact Gaussian convolution of a piecewise-linear slice, extended linearly
/// beyond the grid: out(x) = E f(x + shift + sqrt(variance) Z).
class GaussianSmoother {
public:
    explicit GaussianSmoother(SpaceGrid grid) : grid_(grid) {}

    const SpaceGrid& grid() const noexcept { return grid_; }

    void apply(std::span<const double> slice, double variance, double shift,
               std::span<double> out) const {
        const std::size_t n = grid_.n_intervals();
        if (slice.size() != n + 1 || out.size() != n + 1)
            throw GridMismatch("heat_smooth: slice does not match the space grid");
        if (!(variance >= 0.0)) throw DomainError("heat_smooth: variance must be nonnegative");
        const double dx = grid_.dx();
        if (variance == 0.0) {
            for (std::size_t i = 0; i <= n; ++i) out[i] = interpolate(slice, grid_.x(i) + shift);
            return;
        }
        const double s = std::sqrt(variance);
        const double reach = 9.0 * s + dx;
        const long dlo = std::max(-long(n), long(std::floor((shift - reach) / dx)));
        const long dhi = std::min(long(n), long(std::ceil((shift + reach) / dx)));
        if (dlo > dhi) {
            for (std::size_t i = 0; i <= n; ++i) out[i] = interpolate(slice, grid_.x(i) + shift);
            return;
        }
        left_.assign(std::size_t(dhi - dlo + 1), 0.0);
        right_.assign(left_.size(), 0.0);
        for (long d = dlo; d <= dhi; ++d) {
            const double c = double(d) * dx - shift;
            const auto idx = std::size_t(d - dlo);
            left_[idx] = segment(c - dx, c, (dx - c) / dx, 1.0 / dx, s);
            right_[idx] = segment(c, c + dx, (c + dx) / dx, -1.0 / dx, s);
        }
        const std::size_t width = left_.size();
        const bool use_fft = width > 96 && n > 96;
        if (use_fft) interior_fft(slice, dlo, dhi);
        for (std::size_t i = 0; i <= n; ++i) {
            double acc = 0.0;
            if (use_fft) {
                const long p = (long(i) + conv_shift_ + long(conv_len_)) % long(conv_len_);
                acc = conv_[std::size_t(p)];
            } else {
                const long jlo = std::max<long>(1, long(i) + dlo);
                const long jhi = std::min<long>(long(n) - 1, long(i) + dhi);
                for (long j = jlo; j <= jhi; ++j) {
                    const auto idx = std::size_t(j - long(i) - dlo);
                    acc += (left_[idx] + right_[idx]) * slice[std::size_t(j)];
                }
            }
            const long d0 = -long(i), dn = long(n) - long(i);
            if (d0 >= dlo && d0 <= dhi) acc += right_[std::size_t(d0 - dlo)] * slice[0];
            if (dn >= dlo && dn <= dhi) acc += left_[std::size_t(dn - dlo)] * slice[n];

            // Linear tails beyond x_min and x_max.
            const double mu_l = grid_.x(i) + shift - grid_.x_min();
            const double p_l = normal_cdf(-mu_l / s);
            if (p_l > 0.0) {
                const double e_l = mu_l * p_l - s * normal_pdf(mu_l / s);
                acc += slice[0] * (p_l - e_l / dx) + slice[1] * (e_l / dx);
            }
            const double mu_r = grid_.x(i) + shift - grid_.x_max();
            const double p_r = normal_cdf(mu_r / s);
            if (p_r > 0.0) {
                const double e_r = mu_r * p_r + s * normal_pdf(mu_r / s);
                acc += slice[n] * (p_r + e_r / dx) - slice[n - 1] * (e_r / dx);
            }
            out[i] = acc;
        }
    }

    /// Piecewise-linear interpolation with linear extrapolation.
    double interpolate(std::span<const double> slice, double x) const {
        const std::size_t n = grid_.n_intervals();
        const double pos = (x - grid_.x_min()) / grid_.dx();
        std::size_t j;
        if (pos <= 0.0)
            j = 0;
        else if (pos >= double(n - 1))
            j = n - 1;
        else
            j = static_cast<std::size_t>(pos);
        const double w = pos - double(j);
        return slice[j] + w * (slice[j + 1] - slice[j]);
    }

private:
    // Circular convolution of the interior slice with the reversed weights,
    // padded so no wrap-around reaches a used entry.
    void interior_fft(std::span<const double> slice, long dlo, long dhi) const {
        const std::size_t n = grid_.n_intervals();
        const std::size_t width = left_.size();
        std::size_t len = 1;
        while (len < n + 1 + width) len <<= 1;
        std::vector<double> a(len, 0.0), kr(len, 0.0);
        for (std::size_t j = 1; j < n; ++j) a[j] = slice[j];
        for (std::size_t e = 0; e < width; ++e) {
            const auto idx = std::size_t(dhi - dlo) - e;
            kr[e] = left_[idx] + right_[idx];
        }
        std::vector<std::complex<double>> fa, fk;
        fft_.fwd(fa, a);
        fft_.fwd(fk, kr);
        for (std::size_t m = 0; m < fa.size(); ++m) fa[m] *= fk[m];
        fft_.inv(conv_, fa);
        conv_len_ = len;
        conv_shift_ = dhi;
    }

    // Integral over [a, b] of (alpha + beta y) N(y; 0, s^2) dy.
    static double segment(double a, double b, double alpha, double beta, double s) {
        const double za = a / s, zb = b / s;
        double mass;
        if (za >= 0.0)
            mass = normal_sf(za) - normal_sf(zb);
        else if (zb <= 0.0)
            mass = normal_cdf(zb) - normal_cdf(za);
        else
            mass = 1.0 - normal_cdf(za) - normal_sf(zb);
        return alpha * mass + beta * s * (normal_pdf(za) - normal_pdf(zb));
    }

    SpaceGrid grid_;
    mutable std::vector<double> left_;
    mutable std::vector<double> right_;
    mutable std::vector<double> conv_;
    mutable std::size_t conv_len_ = 0;
    mutable long conv_shift_ = 0;
    mutable Eigen::FFT<double> fft_;
};

/// Conditional-expectation smoothing of one slice.
inline std::vector<double> heat_smooth(const SpaceGrid& grid, std::span<const double> slice,
                                       double variance, double shift = 0.0) {
    std::vector<double> out(slice.size());
    GaussianSmoother(grid).apply(slice, variance, shift, out);
    return out;
}

/// Left-point Riemann-Stieltjes sum of a deterministic integrand against one
/// path; for deterministic f it converges to the divergence integral.
inline double divergence_integral_deterministic(std::span<const double> f,
                                                std::span<const double> path) {
    if (f.size() != path.size()) throw GridMismatch("divergence integral: size mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) s += f[k] * (path[k + 1] - path[k]);
    return s;
}

}  // namespace fbsde
