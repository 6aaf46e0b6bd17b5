#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include <boost/math/tools/toms748_solve.hpp>

#include "gkdv/errors.hpp"

namespace gkdv {

/// Default interior accuracy order of the finite-difference stencils.
inline constexpr int kDefaultAccuracy = 8;

/// Uniform 1-D grid y_i = y_min + i*h, i = 0..n-1.
struct Grid {
    double y_min = 0.0;
    double y_max = 1.0;
    std::size_t n = 16;

    Grid() = default;
    Grid(double lo, double hi, std::size_t count) : y_min(lo), y_max(hi), n(count) {
        if (!(std::isfinite(lo) && std::isfinite(hi)) || !(lo < hi))
            throw DomainError("Grid: need finite y_min < y_max");
        if (count < 16) throw DomainError("Grid: need n >= 16");
    }

    /// Grid with spacing as close as possible to h_target.
    static Grid with_spacing(double lo, double hi, double h_target) {
        auto count = static_cast<std::size_t>(std::llround((hi - lo) / h_target)) + 1;
        return Grid(lo, hi, std::max<std::size_t>(count, 16));
    }

    double h() const { return (y_max - y_min) / static_cast<double>(n - 1); }
    double node(std::size_t i) const { return y_min + static_cast<double>(i) * h(); }

    std::vector<double> nodes() const {
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = node(i);
        return y;
    }

    /// Index of the node closest to y (clamped).
    std::size_t nearest(double y) const {
        double t = std::round((y - y_min) / h());
        t = std::clamp(t, 0.0, static_cast<double>(n - 1));
        return static_cast<std::size_t>(t);
    }

    bool operator==(const Grid& o) const {
        return y_min == o.y_min && y_max == o.y_max && n == o.n;
    }
};

/// Sampled function on a Grid. Values are always finite.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(const Grid& g) : grid_(g), v_(g.n, 0.0) {}
    GridFunction(const Grid& g, std::vector<double> values) : grid_(g), v_(std::move(values)) {
        if (v_.size() != grid_.n) throw DomainError("GridFunction: values size != grid.n");
        check_finite();
    }
    template <class F>
    static GridFunction from(const Grid& g, F&& f) {
        std::vector<double> v(g.n);
        for (std::size_t i = 0; i < g.n; ++i) v[i] = f(g.node(i));
        return GridFunction(g, std::move(v));
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    double& operator[](std::size_t i) { return v_[i]; }
    std::span<const double> values() const { return v_; }
    std::span<double> values() { return v_; }
    const std::vector<double>& vec() const { return v_; }

    void check_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) throw NonFiniteError("GridFunction: non-finite value");
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v_) m = std::max(m, std::abs(x));
        return m;
    }

    GridFunction& operator+=(const GridFunction& o) {
        same_grid(o);
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        same_grid(o);
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
        return *this;
    }
    GridFunction& operator*=(double c) {
        for (double& x : v_) x *= c;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(GridFunction a, double c) { return a *= c; }
    friend GridFunction operator*(double c, GridFunction a) { return a *= c; }

    /// Pointwise product.
    friend GridFunction pointwise(const GridFunction& a, const GridFunction& b) {
        a.same_grid(b);
        GridFunction r(a.grid_);
        for (std::size_t i = 0; i < r.v_.size(); ++i) r.v_[i] = a.v_[i] * b.v_[i];
        return r;
    }

    void same_grid(const GridFunction& o) const {
        if (!(grid_ == o.grid_)) throw GridMismatch("grid functions live on different grids");
    }

private:
    Grid grid_{};
    std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Finite differences

/// Fornberg's algorithm: weights of the m-th derivative at z from nodes x.
inline std::vector<double> fornberg_weights(double z, std::span<const double> x, int m) {
    const int n = static_cast<int>(x.size()) - 1;
    std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
    double c1 = 1.0, c4 = x[0] - z;
    c[0][0] = 1.0;
    for (int i = 1; i <= n; ++i) {
        int mn = std::min(i, m);
        double c2 = 1.0, c5 = c4;
        c4 = x[i] - z;
        for (int j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k > 0; --k)
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k > 0; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n + 1);
    for (int i = 0; i <= n; ++i) w[i] = c[i][m];
    return w;
}

/// Stencil set for one derivative order on unit spacing: a centred interior
/// stencil and shifted closures for the first/last `half` rows.
struct Stencil {
    int order = 1;
    int accuracy = kDefaultAccuracy;
    int half = 0;        // interior stencil covers i-half..i+half
    int width_b = 0;     // closure stencil width
    std::vector<double> interior;
    std::vector<std::vector<double>> left;   // row r uses nodes 0..width_b-1
    std::vector<std::vector<double>> right;  // row n-half+r uses nodes n-width_b..n-1

    static Stencil build(int order, int accuracy) {
        Stencil s;
        s.order = order;
        s.accuracy = accuracy;
        s.half = (order + accuracy - 1) / 2;
        s.width_b = order + accuracy;
        std::vector<double> xs;
        for (int k = -s.half; k <= s.half; ++k) xs.push_back(k);
        s.interior = fornberg_weights(0.0, xs, order);
        std::vector<double> xb(s.width_b);
        for (int k = 0; k < s.width_b; ++k) xb[k] = k;
        for (int r = 0; r < s.half; ++r) {
            s.left.push_back(fornberg_weights(r, xb, order));
            s.right.push_back(fornberg_weights(s.width_b - s.half + r, xb, order));
        }
        return s;
    }

    /// out = f^{(order)} on a grid of spacing h.
    void apply(std::span<const double> f, std::span<double> out, double h) const {
        const std::size_t n = f.size();
        if (n < static_cast<std::size_t>(width_b))
            throw DomainError("derivative: grid too small for stencil");
        const double scale = 1.0 / std::pow(h, order);
        const std::size_t hw = static_cast<std::size_t>(half);
        for (std::size_t r = 0; r < hw; ++r) {
            double a = 0.0, b = 0.0;
            for (int k = 0; k < width_b; ++k) {
                a += left[r][k] * f[k];
                b += right[r][k] * f[n - width_b + k];
            }
            out[r] = a * scale;
            out[n - hw + r] = b * scale;
        }
        const double* w = interior.data();
        const int m = 2 * half + 1;
        for (std::size_t i = hw; i + hw < n; ++i) {
            const double* fi = f.data() + (i - hw);
            double a = 0.0;
            for (int k = 0; k < m; ++k) a += w[k] * fi[k];
            out[i] = a * scale;
        }
    }

    /// Value of row i applied to f (single node).
    double apply_row(std::span<const double> f, std::size_t i, double h) const {
        const std::size_t n = f.size();
        const std::size_t hw = static_cast<std::size_t>(half);
        double a = 0.0;
        if (i < hw) {
            for (int k = 0; k < width_b; ++k) a += left[i][k] * f[k];
        } else if (i + hw >= n) {
            std::size_t r = i - (n - hw);
            for (int k = 0; k < width_b; ++k) a += right[r][k] * f[n - width_b + k];
        } else {
            for (int k = 0; k < 2 * half + 1; ++k) a += interior[k] * f[i - hw + k];
        }
        return a / std::pow(h, order);
    }

    /// Row i as (column, weight) pairs, scaled for spacing h.
    std::vector<std::pair<std::size_t, double>> row(std::size_t i, std::size_t n, double h) const {
        const double scale = 1.0 / std::pow(h, order);
        const std::size_t hw = static_cast<std::size_t>(half);
        std::vector<std::pair<std::size_t, double>> out;
        if (i < hw) {
            for (int k = 0; k < width_b; ++k) out.emplace_back(k, left[i][k] * scale);
        } else if (i + hw >= n) {
            std::size_t r = i - (n - hw);
            for (int k = 0; k < width_b; ++k) out.emplace_back(n - width_b + k, right[r][k] * scale);
        } else {
            for (int k = 0; k < 2 * half + 1; ++k) out.emplace_back(i - hw + k, interior[k] * scale);
        }
        return out;
    }

    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix(std::size_t n, double h) const {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(n * static_cast<std::size_t>(width_b));
        for (std::size_t i = 0; i < n; ++i)
            for (auto [j, w] : row(i, n, h)) t.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
        Eigen::SparseMatrix<double, Eigen::RowMajor> m(static_cast<int>(n), static_cast<int>(n));
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }
};

/// Shared, lazily built stencil for (order, accuracy).
inline const Stencil& stencil(int order, int accuracy = kDefaultAccuracy) {
    if (order < 1 || order > 3) throw DomainError("derivative order must be in 1..3");
    if (accuracy < 2 || accuracy % 2 != 0 || accuracy > 16)
        throw DomainError("stencil accuracy must be even, in 2..16");
    static std::mutex mu;
    static std::map<std::pair<int, int>, Stencil> cache;
    std::lock_guard lock(mu);
    auto key = std::make_pair(order, accuracy);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, Stencil::build(order, accuracy)).first;
    return it->second;
}

/// d^order f / dy^order; centred interior stencils, shifted closures at the ends.
inline GridFunction derivative(const GridFunction& f, int order, int accuracy = kDefaultAccuracy) {
    const Stencil& s = stencil(order, accuracy);
    GridFunction out(f.grid());
    s.apply(f.values(), out.values(), f.grid().h());
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature

/// Fourth-order end-corrected trapezoid weights (3/8, 7/6, 23/24, 1, ..., 1) * h.
inline std::vector<double> quadrature_weights(const Grid& g) {
    std::vector<double> w(g.n, g.h());
    const double c[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
    for (int k = 0; k < 3; ++k) {
        w[k] *= c[k];
        w[g.n - 1 - k] *= c[k];
    }
    return w;
}

inline double integrate(std::span<const double> f, const Grid& g) {
    const double h = g.h();
    const std::size_t n = g.n;
    double s = 0.0;
    for (std::size_t i = 3; i + 3 < n; ++i) s += f[i];
    s += 3.0 / 8.0 * (f[0] + f[n - 1]) + 7.0 / 6.0 * (f[1] + f[n - 2]) + 23.0 / 24.0 * (f[2] + f[n - 3]);
    return s * h;
}

inline double integrate(const GridFunction& f) { return integrate(f.values(), f.grid()); }

/// L2 scalar product (f, g).
inline double inner(const GridFunction& f, const GridFunction& g) {
    f.same_grid(g);
    const auto& a = f.vec();
    const auto& b = g.vec();
    const Grid& gr = f.grid();
    const std::size_t n = gr.n;
    double s = 0.0;
    for (std::size_t i = 3; i + 3 < n; ++i) s += a[i] * b[i];
    auto ab = [&](std::size_t i) { return a[i] * b[i]; };
    s += 3.0 / 8.0 * (ab(0) + ab(n - 1)) + 7.0 / 6.0 * (ab(1) + ab(n - 2)) +
         23.0 / 24.0 * (ab(2) + ab(n - 3));
    return s * gr.h();
}

inline double norm_l2(const GridFunction& f) { return std::sqrt(std::max(0.0, inner(f, f))); }

/// (∫|f|^q)^{1/q}
inline double norm_lq(const GridFunction& f, double q) {
    std::vector<double> a(f.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::pow(std::abs(f[i]), q);
    return std::pow(std::max(0.0, integrate(a, f.grid())), 1.0 / q);
}

// ---------------------------------------------------------------------------
// Root finding

/// Bracketed root of fn on [lo, hi]. Stops when |fn(x)| <= tol or the
/// bracket width is <= tol.
inline double find_root(const std::function<double(double)>& fn, double lo, double hi, double tol,
                        std::size_t max_iter = 200) {
    if (!(lo <= hi)) std::swap(lo, hi);
    auto eval = [&](double x) {
        double v = fn(x);
        if (!std::isfinite(v)) throw NonFiniteError("find_root: non-finite evaluation");
        return v;
    };
    double flo = eval(lo), fhi = eval(hi);
    if (flo * fhi > 0.0) throw BracketError("find_root: no sign change in bracket");
    if (std::abs(flo) <= tol) return lo;
    if (std::abs(fhi) <= tol) return hi;

    struct Found {
        double x;
    };
    auto wrapped = [&](double x) {
        double v = eval(x);
        if (std::abs(v) <= tol) throw Found{x};
        return v;
    };
    auto width_ok = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    std::uintmax_t it = max_iter;
    try {
        auto [a, b] = boost::math::tools::toms748_solve(wrapped, lo, hi, flo, fhi, width_ok, it);
        if (it >= max_iter && !width_ok(a, b))
            throw ConvergenceError("find_root: iteration limit reached");
        return 0.5 * (a + b);
    } catch (const Found& f) {
        return f.x;
    }
}

// ---------------------------------------------------------------------------
// Interpolation

/// Local Lagrange interpolation on a uniform grid with `width` nodes.
/// Points outside [y_min, y_max] evaluate to `outside`.
class Interpolator {
public:
    explicit Interpolator(const Grid& g, int width = 8) : g_(g), width_(width), bw_(width) {
        if (width < 2 || width > static_cast<int>(g.n)) throw DomainError("Interpolator: bad width");
        std::vector<double> f(width + 1, 1.0);
        for (int k = 1; k <= width; ++k) f[k] = f[k - 1] * k;
        for (int k = 0; k < width; ++k) {
            double d = f[k] * f[width - 1 - k];
            bw_[k] = (((width - 1 - k) % 2) ? -1.0 : 1.0) / d;
        }
    }

    double operator()(std::span<const double> f, double y, double outside = 0.0) const {
        const double h = g_.h();
        const double t = (y - g_.y_min) / h;
        const double n1 = static_cast<double>(g_.n - 1);
        if (t < -1e-9 || t > n1 + 1e-9) return outside;
        const int n = static_cast<int>(g_.n);
        int j0 = static_cast<int>(std::floor(t)) - (width_ / 2 - 1);
        j0 = std::clamp(j0, 0, n - width_);
        const double u = t - j0;
        double L = 1.0;
        for (int k = 0; k < width_; ++k) {
            double d = u - k;
            if (d == 0.0) return f[j0 + k];
            L *= d;
        }
        double s = 0.0;
        for (int k = 0; k < width_; ++k) s += bw_[k] / (u - k) * f[j0 + k];
        return L * s;
    }

    const Grid& grid() const { return g_; }

private:
    Grid g_;
    int width_;
    std::vector<double> bw_;
};

}  // namespace gkdv
