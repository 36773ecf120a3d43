#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stablekit {

using Complex = std::complex<double>;

/// Point in R^d, d <= 2.  Unused components are zero.
struct Vec {
    std::array<double, 2> c{0.0, 0.0};
    int d = 1;

    Vec() = default;
    explicit Vec(double x) : c{x, 0.0}, d(1) {}
    Vec(double x, double y) : c{x, y}, d(2) {}

    double& operator[](int i) { return c[static_cast<size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<size_t>(i)]; }

    Vec& operator+=(const Vec& o) { c[0] += o.c[0]; c[1] += o.c[1]; return *this; }
    Vec& operator-=(const Vec& o) { c[0] -= o.c[0]; c[1] -= o.c[1]; return *this; }
    Vec& operator*=(double s) { c[0] *= s; c[1] *= s; return *this; }

    friend Vec operator+(Vec a, const Vec& b) { a += b; return a; }
    friend Vec operator-(Vec a, const Vec& b) { a -= b; return a; }
    friend Vec operator*(double s, Vec a) { a *= s; return a; }
    friend Vec operator*(Vec a, double s) { a *= s; return a; }
    friend Vec operator-(Vec a) { a *= -1.0; return a; }

    double dot(const Vec& o) const { return c[0] * o.c[0] + c[1] * o.c[1]; }
    double norm() const { return std::sqrt(dot(*this)); }
};

inline Vec zero_vec(int d) { Vec v; v.d = d; return v; }

/// 2x2 orthogonal (or general) matrix, row-major.  Identity for d=1.
struct Mat2 {
    std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};

    static Mat2 identity() { return {}; }
    static Mat2 rotation(double angle) {
        Mat2 r;
        const double c = std::cos(angle), s = std::sin(angle);
        r.m = {c, -s, s, c};
        return r;
    }
    Vec apply(const Vec& v) const {
        Vec r(m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]);
        r.d = v.d;
        return r;
    }
    Vec apply_transpose(const Vec& v) const {
        Vec r(m[0] * v[0] + m[2] * v[1], m[1] * v[0] + m[3] * v[1]);
        r.d = v.d;
        return r;
    }
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Parse failure: carries the byte offset of the offending token.
struct ParseError : Error {
    size_t offset;
    std::string expected;
    ParseError(const std::string& msg, size_t off, std::string exp = "")
        : Error(msg + " at offset " + std::to_string(off) +
                (exp.empty() ? "" : " (expected " + exp + ")")),
          offset(off), expected(std::move(exp)) {}
};

/// Evaluation failure: unbound variable or domain error (log<=0, div by 0).
struct EvalError : Error {
    using Error::Error;
};

/// A quadrature or series failed to reach its target accuracy.
struct NumericalError : Error {
    double residual = 0.0;
    explicit NumericalError(const std::string& msg, double res = 0.0)
        : Error(msg), residual(res) {}
};

struct DimensionError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic reductions
// ---------------------------------------------------------------------------

/// Sum in fixed 1024-element blocks so the result does not depend on the
/// number of threads that produced the addends.
inline double block_sum(const std::vector<double>& v) {
    constexpr size_t B = 1024;
    double total = 0.0;
    for (size_t i = 0; i < v.size(); i += B) {
        double s = 0.0;
        const size_t end = std::min(v.size(), i + B);
        for (size_t j = i; j < end; ++j) s += v[j];
        total += s;
    }
    return total;
}

inline bool nearly_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol;
}

} // namespace stablekit
