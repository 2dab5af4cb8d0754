// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/field.hpp"
#include "fbsde/format.hpp"
#include "fbsde/frac_calc.hpp"
#include "fbsde/grid.hpp"
#include "fbsde/model.hpp"
#include "fbsde/quadrature.hpp"

namespace fbsde {

/// Space domain: [min mean - x_span * max std, max mean + x_span * max std].
struct SpaceParams {
    std::size_t n_space = 240;
    double x_span = 6.0;
};

inline SpaceGrid make_space_grid(const Marginals& m, const SpaceParams& p) {
    const auto [lo, hi] = std::minmax_element(m.mean.begin(), m.mean.end());
    const double var = *std::max_element(m.variance.begin(), m.variance.end());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    return SpaceGrid(*lo - p.x_span * sd, *hi + p.x_span * sd, p.n_space);
}

namespace detail {

// Thomas algorithm; a = sub, b = diag, c = super diagonal. Overwrites d.
inline void solve_tridiagonal(std::span<const double> a, std::span<const double> b,
                              std::span<const double> c, std::span<double> d, std::vector<double>& work) {
    const std::size_t n = b.size();
    work.resize(n);
    double beta = b[0];
    if (beta == 0.0 || !std::isfinite(beta)) throw NumericalError("implicit solve: zero pivot");
    d[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        work[i] = c[i - 1] / beta;
        beta = b[i] - a[i] * work[i];
        if (beta == 0.0 || !std::isfinite(beta)) throw NumericalError("implicit solve: zero pivot");
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= work[i + 1] * d[i + 1];
}

}  // namespace detail

/// Backward Crank-Nicolson solver for
///   u_t + a(t) u_xx + b(t) u_x + f(t, x, u, sigma u_x, A_y, A_z) = 0,
/// u = g, z = h on [T, T+K], where a = sigma_hat sigma and A_y, A_z are the
/// Gaussian-smoothed anticipated rows.
class BsdeSolver {
public:
    BsdeSolver(ModelSpec model, const TimeGrid& grid, SpaceParams space)
        : model_(std::move(model)), grid_(grid), table_(build_kernel_table(model_, grid)),
          marginals_(eta_marginals(model_, table_)), space_(make_space_grid(marginals_, space)),
          smoother_(space_) {
        k_T_ = grid_.node_index(model_.T);
        if (std::abs(grid_.t_end() - model_.horizon()) > 1e-12 * model_.horizon())
            throw GridMismatch("solver grid must span [0, T+K]");
        target_y_ = delay_targets(grid_, k_T_, model_.delays.delta);
        target_z_ = delay_targets(grid_, k_T_, model_.delays.zeta);
        sigma_ = sample_on(grid_, model_.coefficients.sigma);
        b_ = sample_on(grid_, model_.coefficients.b);
        cache_y_.resize(grid_.size());
        cache_z_.resize(grid_.size());
    }

    const ModelSpec& model() const noexcept { return model_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    const SpaceGrid& space() const noexcept { return space_; }
    const KernelTable& table() const noexcept { return table_; }
    const Marginals& marginals() const noexcept { return marginals_; }
    std::size_t k_T() const noexcept { return k_T_; }
    const std::vector<std::size_t>& delay_target_y() const noexcept { return target_y_; }
    const std::vector<std::size_t>& delay_target_z() const noexcept { return target_z_; }

    /// u = g, z = h on every row.
    SolutionField terminal_extension() const {
        SolutionField field(grid_, space_, k_T_);
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            auto u = field.u(k);
            auto z = field.z(k);
            for (std::size_t i = 0; i < space_.size(); ++i) {
                u[i] = model_.terminal.g(space_.x(i));
                z[i] = model_.terminal.h(space_.x(i));
            }
        }
        return field;
    }

    /// Recomputes rows [lo, hi) of `field` backward from row hi. Anticipated
    /// rows come from `frozen`, or from `field` itself when frozen is null
    /// (rows at or after the current one, since delays are nonnegative).
    void sweep(SolutionField& field, const SolutionField* frozen, std::size_t lo, std::size_t hi) const {
        if (hi > k_T_ || lo > hi) throw DomainError("sweep: window outside [0, T]");
        if (frozen) field.check_same(*frozen);
        const std::size_t n = space_.n_intervals(), m = space_.size();
        const double dx = space_.dx(), dt = grid_.dt();
        const DriverSpec& f = model_.driver;

        std::vector<double> fnext(m), fcur(m), rhs(m), a(m), bd(m), c(m), du(m), d2(m), unew(m), work;
        std::vector<double> ay(m, 0.0), az(m, 0.0);

        auto anticipated = [&](std::size_t k, std::span<const double> u_self, std::span<const double> z_self) {
            const SolutionField& src = frozen ? *frozen : field;
            if (f.uses_ay()) {
                const std::size_t r = target_y_[k];
                auto row = (r == k && !frozen) ? u_self : src.u(r);
                smooth_cached(cache_y_[k], row, k, r, ay);
            }
            if (f.uses_az()) {
                const std::size_t r = target_z_[k];
                auto row = (r == k && !frozen) ? z_self : src.z(r);
                smooth_cached(cache_z_[k], row, k, r, az);
            }
        };
        auto eval = [&](std::size_t k, std::span<const double> u, std::span<const double> z, std::vector<double>& out) {
            const double t = grid_.time(k);
            for (std::size_t i = 0; i <= n; ++i) out[i] = f({t, space_.x(i), u[i], z[i], ay[i], az[i]});
        };

        anticipated(hi, field.u(hi), field.z(hi));
        eval(hi, field.u(hi), field.z(hi), fnext);

        for (std::size_t k = hi; k-- > lo;) {
            const auto up = field.u(k + 1);
            const double A = 0.5 * (table_.sigma_norm_sq[k + 1] - table_.sigma_norm_sq[k]);
            const double p = 0.5 * A / (dx * dx);
            const double qn = dt * b_[k + 1] / (4.0 * dx), qc = dt * b_[k] / (4.0 * dx);

            // Explicit half: u^{k+1} + p dx^2 D2 u^{k+1} + (dt/2) b D1 u^{k+1}.
            second_difference(up, d2);
            derivative(space_, up, du);
            for (std::size_t i = 0; i <= n; ++i)
                rhs[i] = up[i] + p * dx * dx * d2[i] + 2.0 * qn * dx * du[i] + 0.5 * dt * fnext[i];

            // Implicit operator I - p dx^2 D2 - (dt/2) b D1 with boundary
            // rows eliminated to tridiagonal form.
            for (std::size_t i = 1; i < n; ++i) {
                a[i] = -p + qc;
                bd[i] = 1.0 + 2.0 * p;
                c[i] = -p - qc;
            }
            const double r00 = 1.0 - p + 3.0 * qc, r01 = 2.0 * p - 4.0 * qc, r02 = -p + qc;
            const double rnn = 1.0 - p - 3.0 * qc, rn1 = 2.0 * p + 4.0 * qc, rn2 = -p - qc;
            const double e0 = c[1] != 0.0 ? r02 / c[1] : 0.0;
            const double en = a[n - 1] != 0.0 ? rn2 / a[n - 1] : 0.0;
            bd[0] = r00 - e0 * a[1];
            c[0] = r01 - e0 * bd[1];
            a[n] = rn1 - en * bd[n - 1];
            bd[n] = rnn - en * c[n - 1];
            a[0] = c[n] = 0.0;

            auto u = field.u(k);
            auto z = field.z(k);
            std::copy(up.begin(), up.end(), u.begin());
            const double sk = sigma_[k];
            for (std::size_t i = 0; i <= n; ++i) z[i] = field.z(k + 1)[i];
            anticipated(k, u, z);
            eval(k, u, z, fcur);

            bool done = false;
            for (int it = 0; it < 60 && !done; ++it) {
                for (std::size_t i = 0; i <= n; ++i) unew[i] = rhs[i] + 0.5 * dt * fcur[i];
                unew[0] -= e0 * unew[1];
                unew[n] -= en * unew[n - 1];
                detail::solve_tridiagonal(a, bd, c, unew, work);
                std::copy(unew.begin(), unew.end(), u.begin());
                derivative(space_, u, z);
                for (double& v : z) v *= sk;
                anticipated(k, u, z);
                eval(k, u, z, fnext);
                double change = 0.0, scale = 1.0;
                for (std::size_t i = 0; i <= n; ++i) {
                    change = std::max(change, std::abs(fnext[i] - fcur[i]));
                    scale = std::max(scale, std::abs(fcur[i]));
                }
                done = change <= 1e-14 * scale;
                std::swap(fcur, fnext);
                if (!std::isfinite(change)) break;
            }
            if (!done) throw NumericalError("implicit driver iteration did not converge at t=" +
                                            format_double(grid_.time(k)));
            for (double v : u)
                if (!std::isfinite(v))
                    throw NumericalError("non-finite solution at t=" + format_double(grid_.time(k)) +
                                         "; the space domain may be too small");
            std::swap(fnext, fcur);
        }
    }

    /// Anticipated-Y slice at row k computed from `source`.
    std::vector<double> anticipated_y(const SolutionField& source, std::size_t k) const {
        const std::size_t r = target_y_[std::min(k, k_T_)];
        std::vector<double> out(space_.size());
        smoother_.apply(source.u(r), table_.sigma_norm_sq[r] - table_.sigma_norm_sq[k],
                        marginals_.mean[r] - marginals_.mean[k], out);
        return out;
    }
    std::vector<double> anticipated_z(const SolutionField& source, std::size_t k) const {
        const std::size_t r = target_z_[std::min(k, k_T_)];
        std::vector<double> out(space_.size());
        smoother_.apply(source.z(r), table_.sigma_norm_sq[r] - table_.sigma_norm_sq[k],
                        marginals_.mean[r] - marginals_.mean[k], out);
        return out;
    }

private:
    struct SmoothCache {
        std::vector<double> source;
        std::vector<double> result;
    };

    void smooth_cached(SmoothCache& cache, std::span<const double> row, std::size_t k, std::size_t r,
                       std::vector<double>& out) const {
        if (cache.source.size() == row.size() && std::equal(row.begin(), row.end(), cache.source.begin())) {
            std::copy(cache.result.begin(), cache.result.end(), out.begin());
            return;
        }
        const double var = std::max(0.0, table_.sigma_norm_sq[r] - table_.sigma_norm_sq[k]);
        smoother_.apply(row, var, marginals_.mean[r] - marginals_.mean[k], out);
        cache.source.assign(row.begin(), row.end());
        cache.result = out;
    }

    // Second difference scaled by dx^2; end rows copy their neighbours.
    void second_difference(std::span<const double> f, std::span<double> out) const {
        const std::size_t n = space_.n_intervals();
        const double inv = 1.0 / (space_.dx() * space_.dx());
        for (std::size_t i = 1; i < n; ++i) out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv;
        out[0] = out[1];
        out[n] = out[n - 1];
    }

    ModelSpec model_;
    TimeGrid grid_;
    KernelTable table_;
    Marginals marginals_;
    SpaceGrid space_;
    GaussianSmoother smoother_;
    std::size_t k_T_ = 0;
    std::vector<std::size_t> target_y_, target_z_;
    std::vector<double> sigma_, b_;
    mutable std::vector<SmoothCache> cache_y_, cache_z_;
};

/// One backward pass on [t_lo, t_hi] with the anticipated arguments read
/// from `anticipated`; all other rows are copied from it.
inline SolutionField solve_frozen(const BsdeSolver& solver, const SolutionField& anticipated, double t_lo,
                                  double t_hi) {
    const std::size_t lo = solver.grid().node_index(t_lo), hi = solver.grid().node_index(t_hi);
    SolutionField out = anticipated;
    solver.sweep(out, &anticipated, lo, hi);
    return out;
}

/// Single backward pass on [0, T] in which every anticipated row is the one
/// just computed. Valid because the sweep runs backward and delays are >= 0.
inline SolutionField solve_direct(const BsdeSolver& solver) {
    SolutionField field = solver.terminal_extension();
    solver.sweep(field, nullptr, 0, solver.k_T());
    return field;
}

struct NormPair {
    double y = 0.0;
    double z = 0.0;
    double combined() const { return std::sqrt(y * y + z * z); }
};

/// Weighted norms of u_a - u_b, z_a - z_b over rows [lo, hi]:
/// (int e^{beta t} E|.|^2 dt)^{1/2}, with t^{2H-1} in the Z part.
inline NormPair weighted_norms(const SolutionField& a, const SolutionField& b, const Marginals& m,
                               double hurst, double beta, std::size_t lo, std::size_t hi) {
    a.check_same(b);
    if (m.mean.size() != a.rows()) throw GridMismatch("weighted_norms: marginals do not match the grid");
    const auto& gh = gauss_hermite_normal();
    const TimeGrid& grid = a.time_grid();
    const SpaceGrid& space = a.space_grid();
    std::vector<double> du(a.cols()), dz(a.cols());
    double sy = 0.0, sz = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            du[i] = a.u(k, i) - b.u(k, i);
            dz[i] = a.z(k, i) - b.z(k, i);
        }
        const double sd = std::sqrt(std::max(0.0, m.variance[k]));
        double ey = 0.0, ez = 0.0;
        for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
            const double x = m.mean[k] + sd * gh.nodes[q];
            const double vy = interpolate_linear(space, du, x), vz = interpolate_linear(space, dz, x);
            ey += gh.weights[q] * vy * vy;
            ez += gh.weights[q] * vz * vz;
        }
        const double t = grid.time(k);
        const double w = (lo == hi) ? 0.0 : (k == lo || k == hi) ? 0.5 * grid.dt() : grid.dt();
        const double e = std::exp(beta * t);
        sy += w * e * ey;
        sz += w * e * (t > 0.0 ? std::pow(t, 2.0 * hurst - 1.0) : 0.0) * ez;
    }
    return {std::sqrt(sy), std::sqrt(sz)};
}

inline NormPair weighted_norms(const SolutionField& a, const SolutionField& b, const ModelSpec& model,
                               double beta) {
    const KernelTable table = build_kernel_table(model, a.time_grid());
    return weighted_norms(a, b, eta_marginals(model, table), model.coefficients.hurst, beta, 0,
                          a.time_grid().n_steps());
}

struct PicardOptions {
    double tol = 1e-8;
    std::size_t max_iter = 20;
    double beta = 2.0;
    std::size_t windows = 0;  // 0: from the contraction heuristic
};

struct WindowTrace {
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::vector<NormPair> norms;
    bool converged = false;
};

struct ContractionTrace {
    double beta = 2.0;
    std::vector<double> boundaries;
    std::vector<WindowTrace> windows;
    bool converged = false;
    std::size_t iterations = 0;
    std::size_t restarts = 0;

    /// Largest ratio of successive combined norms over all windows, skipping
    /// pairs whose earlier member is below `floor`.
    double empirical_ratio(double floor = 1e-11) const {
        double worst = 0.0;
        for (const auto& w : windows)
            for (std::size_t i = 1; i < w.norms.size(); ++i) {
                const double prev = w.norms[i - 1].combined();
                if (prev > floor) worst = std::max(worst, w.norms[i].combined() / prev);
            }
        return worst;
    }

    std::size_t max_window_iterations() const {
        std::size_t m = 0;
        for (const auto& w : windows) m = std::max(m, w.norms.size());
        return m;
    }
};

/// n = ceil(8 C (L+1) max(T, T^{2-2H} / (1-H))), at least 1.
inline std::size_t heuristic_windows(const ModelSpec& model) {
    const double H = model.coefficients.hurst, T = model.T;
    const double scale = std::max(T, std::pow(T, 2.0 - 2.0 * H) / (1.0 - H));
    const double n = std::ceil(8.0 * model.driver.lipschitz() * (model.delays.L + 1.0) * scale);
    return n < 1.0 ? 1 : std::size_t(std::min(n, 1e9));
}

struct PicardResult {
    SolutionField field;
    ContractionTrace trace;
};

/// Picard iteration of the freeze-and-resolve map on backward windows of
/// [0, T]. Later windows and [T, T+K] stay fixed while a window iterates.
inline PicardResult picard_solve(const BsdeSolver& solver, const PicardOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw DomainError("picard_solve: tol must be positive");
    if (opt.max_iter == 0) throw DomainError("picard_solve: max_iter must be positive");
    const std::size_t k_T = solver.k_T();
    std::size_t n_windows = opt.windows ? opt.windows : heuristic_windows(solver.model());
    n_windows = std::clamp<std::size_t>(n_windows, 1, std::max<std::size_t>(k_T, 1));
    const double hurst = solver.model().coefficients.hurst;
    std::size_t restarts = 0;

    for (;;) {
        ContractionTrace trace;
        trace.beta = opt.beta;
        trace.restarts = restarts;
        std::vector<std::size_t> nodes(n_windows + 1);
        for (std::size_t j = 0; j <= n_windows; ++j)
            nodes[j] = std::size_t(std::llround(double(j) * double(k_T) / double(n_windows)));
        for (std::size_t node : nodes) trace.boundaries.push_back(solver.grid().time(node));

        SolutionField prev = solver.terminal_extension();
        SolutionField next = prev;
        bool diverged = false;
        trace.converged = true;
        for (std::size_t w = n_windows; w-- > 0 && !diverged;) {
            const std::size_t lo = nodes[w], hi = nodes[w + 1];
            WindowTrace wt;
            wt.t_lo = solver.grid().time(lo);
            wt.t_hi = solver.grid().time(hi);
            if (lo == hi) {
                wt.converged = true;
                trace.windows.push_back(wt);
                continue;
            }
            int growth = 0;
            for (std::size_t it = 0; it < opt.max_iter; ++it) {
                solver.sweep(next, &prev, lo, hi);
                const NormPair d = weighted_norms(next, prev, solver.marginals(), hurst, opt.beta, lo, hi);
                prev.copy_rows(next, lo, hi);
                wt.norms.push_back(d);
                ++trace.iterations;
                if (!std::isfinite(d.combined())) {
                    diverged = true;
                    break;
                }
                if (d.combined() < opt.tol) {
                    wt.converged = true;
                    break;
                }
                const std::size_t s = wt.norms.size();
                growth = (s >= 3 && d.combined() > wt.norms[s - 2].combined()) ? growth + 1 : 0;
                if (growth >= 2) {
                    diverged = true;
                    break;
                }
            }
            trace.converged = trace.converged && wt.converged;
            trace.windows.push_back(std::move(wt));
        }
        if (diverged && n_windows < k_T) {
            n_windows = std::min(2 * n_windows, k_T);
            ++restarts;
            continue;
        }
        if (diverged) trace.converged = false;
        std::reverse(trace.windows.begin(), trace.windows.end());
        return {std::move(prev), std::move(trace)};
    }
}

inline PicardResult picard_solve(const ModelSpec& model, const TimeGrid& grid, const SpaceParams& space,
                                 const PicardOptions& opt = {}) {
    return picard_solve(BsdeSolver(model, grid, space), opt);
}

inline void write_csv(std::ostream& os, const ContractionTrace& trace) {
    os << "window,iteration,norm_Y,norm_Z\n";
    for (std::size_t w = 0; w < trace.windows.size(); ++w)
        for (std::size_t i = 0; i < trace.windows[w].norms.size(); ++i)
            os << w << ',' << (i + 1) << ',' << format_double(trace.windows[w].norms[i].y) << ','
               << format_double(trace.windows[w].norms[i].z) << '\n';
}

/// Left and right sides of the a priori estimate on [0, T]:
///   LHS(t)   = e^{bt} E|Y_t|^2 + int_t^T e^{bs} s^{2H-1} E|Z_s|^2 ds
///   Theta(t) = e^{bT} E|g(eta_T)|^2 + int_t^T e^{bs} E|f0(s, eta_s)|^2 ds
///              + int_T^{T+K} e^{bs} (E|g(eta_s)|^2 + s^{2H-1} E|h(eta_s)|^2) ds
struct AprioriReport {
    std::vector<double> t;
    std::vector<double> lhs;
    std::vector<double> theta;
    /// sup_t LHS / Theta; empty when LHS and Theta vanish identically.
    std::optional<double> ratio;
};

inline AprioriReport apriori_report(const SolutionField& field, const ModelSpec& model,
                                    const Marginals& m, double beta) {
    const TimeGrid& grid = field.time_grid();
    const SpaceGrid& space = field.space_grid();
    const std::size_t k_T = field.k_T(), N = grid.n_steps();
    const double H = model.coefficients.hurst, dt = grid.dt();
    const auto& gh = gauss_hermite_normal();
    auto expect = [&](std::size_t k, auto&& fn) {
        const double sd = std::sqrt(std::max(0.0, m.variance[k]));
        double s = 0.0;
        for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
            const double v = fn(m.mean[k] + sd * gh.nodes[q]);
            s += gh.weights[q] * v * v;
        }
        return s;
    };
    auto tw = [&](std::size_t k) { return grid.time(k) > 0.0 ? std::pow(grid.time(k), 2.0 * H - 1.0) : 0.0; };
    const auto& g = model.terminal.g;
    const auto& h = model.terminal.h;

    double tail = 0.0;
    for (std::size_t k = k_T; k < N; ++k) {
        auto integrand = [&](std::size_t j) {
            return std::exp(beta * grid.time(j)) * (expect(j, g) + tw(j) * expect(j, h));
        };
        tail += 0.5 * dt * (integrand(k) + integrand(k + 1));
    }
    const double head = std::exp(beta * model.T) * expect(k_T, g);

    AprioriReport rep;
    rep.t.resize(k_T + 1);
    rep.lhs.resize(k_T + 1);
    rep.theta.resize(k_T + 1);
    double zint = 0.0, fint = 0.0;
    double prev_z = 0.0, prev_f = 0.0;
    for (std::size_t k = k_T + 1; k-- > 0;) {
        const double t = grid.time(k), e = std::exp(beta * t);
        const double cur_z = e * tw(k) * expect(k, [&](double x) { return interpolate_linear(space, field.z(k), x); });
        const double cur_f = e * expect(k, [&](double x) { return model.driver.f0(t, x); });
        if (k < k_T) {
            zint += 0.5 * dt * (cur_z + prev_z);
            fint += 0.5 * dt * (cur_f + prev_f);
        }
        prev_z = cur_z;
        prev_f = cur_f;
        rep.t[k] = t;
        rep.lhs[k] = e * expect(k, [&](double x) { return interpolate_linear(space, field.u(k), x); }) + zint;
        rep.theta[k] = head + fint + tail;
    }
    double sup = 0.0;
    bool any = false;
    for (std::size_t k = 0; k <= k_T; ++k) {
        if (rep.theta[k] > 0.0) {
            sup = std::max(sup, rep.lhs[k] / rep.theta[k]);
            any = true;
        } else if (rep.lhs[k] > 0.0) {
            sup = std::numeric_limits<double>::infinity();
            any = true;
        }
    }
    if (any) rep.ratio = sup;
    return rep;
}

inline void write_csv(std::ostream& os, const AprioriReport& rep) {
    os << "t,lhs,theta\n";
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        const double row[] = {rep.t[k], rep.lhs[k], rep.theta[k]};
        write_csv_row(os, row);
    }
}

}  // namespace fbsde
