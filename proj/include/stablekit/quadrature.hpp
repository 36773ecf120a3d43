#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "stablekit/common.hpp"

namespace stablekit {

/// 10-point Gauss-Legendre nodes/weights on [-1,1].
struct GL10 {
    static constexpr std::array<double, 5> x = {
        0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
        0.8650633666889845, 0.9739065285171717};
    static constexpr std::array<double, 5> w = {
        0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
        0.1494513491505806, 0.0666713443086881};
};

template <typename F>
auto gauss10(F&& f, double a, double b) -> decltype(f(0.0)) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    decltype(f(0.0)) sum{};
    for (int i = 0; i < 5; ++i) {
        sum += GL10::w[static_cast<size_t>(i)] *
               (f(mid + half * GL10::x[static_cast<size_t>(i)]) +
                f(mid - half * GL10::x[static_cast<size_t>(i)]));
    }
    return half * sum;
}

/// Composite Gauss on [a,b] with n equal panels.
template <typename F>
auto composite_gauss(F&& f, double a, double b, int n) -> decltype(f(0.0)) {
    decltype(f(0.0)) sum{};
    const double h = (b - a) / n;
    for (int k = 0; k < n; ++k) sum += gauss10(f, a + k * h, a + (k + 1) * h);
    return sum;
}

/// Adaptive bisection with a GL10 vs 2xGL10 error estimate.
template <typename F, typename V = decltype(std::declval<F>()(0.0))>
V adaptive_quad(F&& f, double a, double b, double tol, int max_depth = 48) {
    struct Rec {
        const F& f;
        double tol;
        V run(double a, double b, const V& whole, int depth) const {
            const double m = 0.5 * (a + b);
            const V left = gauss10(f, a, m);
            const V right = gauss10(f, m, b);
            const V both = left + right;
            if (depth <= 0 || std::abs(both - whole) <= tol) return both;
            return run(a, m, left, depth - 1) + run(m, b, right, depth - 1);
        }
    };
    Rec rec{f, tol};
    return rec.run(a, b, gauss10(f, a, b), max_depth);
}

/// Truncated expansion of \int_T^inf e^{iu} u^{-beta} du by repeated
/// integration by parts; error O(T^{-beta-terms}).
inline Complex oscillatory_remainder(double T, double beta, int terms = 4) {
    const Complex i(0.0, 1.0);
    const Complex eiT(std::cos(T), std::sin(T));
    Complex acc(0.0, 0.0), coef(1.0, 0.0);
    for (int k = 0; k < terms; ++k) {
        acc += coef * (i * eiT * std::pow(T, -beta));
        coef *= -i * beta;
        beta += 1.0;
    }
    return acc;
}

/// Oscillatory tail integral  \int_a^inf e^{iu} u^{-1-alpha} du:
/// three integration-by-parts passes, then half-period panels plus an
/// analytic remainder at the truncation point.
inline Complex oscillatory_tail(double a, double alpha) {
    const double pi = 3.14159265358979323846;
    const Complex i(0.0, 1.0);
    const Complex eia(std::cos(a), std::sin(a));
    double beta = 1.0 + alpha;
    Complex acc(0.0, 0.0), coef(1.0, 0.0);
    for (int pass = 0; pass < 3; ++pass) {
        acc += coef * (i * eia * std::pow(a, -beta));
        coef *= -i * beta;
        beta += 1.0;
    }
    const int panels = 64;
    Complex sum(0.0, 0.0);
    for (int k = 0; k < panels; ++k) {
        // The power factor is steep near the left end; subdivide early panels.
        const int sub = k < 4 ? 8 : (k < 16 ? 2 : 1);
        sum += composite_gauss(
            [&](double u) { return Complex(std::cos(u), std::sin(u)) * std::pow(u, -beta); },
            a + k * pi, a + (k + 1) * pi, sub);
    }
    sum += oscillatory_remainder(a + panels * pi, beta);
    return acc + coef * sum;
}

} // namespace stablekit
