#include "stablekit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stablekit {

Grid Grid::line(double lo_, double hi_, int n_) {
    Grid g;
    g.d = 1;
    g.lo = {lo_, 0.0};
    g.hi = {hi_, 0.0};
    g.n = {n_, 1};
    return g;
}

Grid Grid::square(double lo_, double hi_, int n_) {
    Grid g;
    g.d = 2;
    g.lo = {lo_, lo_};
    g.hi = {hi_, hi_};
    g.n = {n_, n_};
    return g;
}

Vec Grid::node(long idx) const {
    if (d == 1) {
        Vec v(lo[0] + h(0) * static_cast<double>(idx));
        return v;
    }
    const long i = idx / n[1], j = idx % n[1];
    return {lo[0] + h(0) * static_cast<double>(i), lo[1] + h(1) * static_cast<double>(j)};
}

double Grid::trapezoid_weight(long idx) const {
    auto axis_w = [&](int ax, long i) {
        const long nn = n[static_cast<size_t>(ax)];
        if (nn <= 1) return 1.0;
        return (i == 0 || i == nn - 1) ? 0.5 * h(ax) : h(ax);
    };
    if (d == 1) return axis_w(0, idx);
    return axis_w(0, idx / n[1]) * axis_w(1, idx % n[1]);
}

bool Grid::contains(const Vec& x) const {
    for (int ax = 0; ax < d; ++ax)
        if (x[ax] < lo[static_cast<size_t>(ax)] - 1e-12 ||
            x[ax] > hi[static_cast<size_t>(ax)] + 1e-12)
            return false;
    return true;
}

namespace {

// Catmull-Rom weights for fractional offset u in [0,1].
inline void cr_weights(double u, double w[4]) {
    const double u2 = u * u, u3 = u2 * u;
    w[0] = 0.5 * (-u3 + 2.0 * u2 - u);
    w[1] = 0.5 * (3.0 * u3 - 5.0 * u2 + 2.0);
    w[2] = 0.5 * (-3.0 * u3 + 4.0 * u2 + u);
    w[3] = 0.5 * (u3 - u2);
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

} // namespace

double cubic_interp(const Grid& g, const std::vector<double>& v, const Vec& x) {
    if (!g.contains(x)) return 0.0;
    if (g.d == 1) {
        const double s = (x[0] - g.lo[0]) / g.h(0);
        const int i0 = clampi(static_cast<int>(std::floor(s)), 0, g.n[0] - 2);
        const double u = s - i0;
        double w[4];
        cr_weights(u, w);
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
            const int idx = clampi(i0 - 1 + k, 0, g.n[0] - 1);
            acc += w[k] * v[static_cast<size_t>(idx)];
        }
        return acc;
    }
    const double sx = (x[0] - g.lo[0]) / g.h(0);
    const double sy = (x[1] - g.lo[1]) / g.h(1);
    const int i0 = clampi(static_cast<int>(std::floor(sx)), 0, g.n[0] - 2);
    const int j0 = clampi(static_cast<int>(std::floor(sy)), 0, g.n[1] - 2);
    double wx[4], wy[4];
    cr_weights(sx - i0, wx);
    cr_weights(sy - j0, wy);
    double acc = 0.0;
    for (int a = 0; a < 4; ++a) {
        const int i = clampi(i0 - 1 + a, 0, g.n[0] - 1);
        double row = 0.0;
        for (int b = 0; b < 4; ++b) {
            const int j = clampi(j0 - 1 + b, 0, g.n[1] - 1);
            row += wy[b] * v[static_cast<size_t>(i) * g.n[1] + j];
        }
        acc += wx[a] * row;
    }
    return acc;
}

double DensityField::mass() const {
    double acc = 0.0;
    for (long i = 0; i < grid.size(); ++i)
        acc += grid.trapezoid_weight(i) * values[static_cast<size_t>(i)];
    return acc;
}

double DensityField::max_value() const {
    return *std::max_element(values.begin(), values.end());
}

double DensityField::min_value() const {
    return *std::min_element(values.begin(), values.end());
}

void DensityField::check_invariants(double tol_mass) const {
    const double m = mass();
    if (std::abs(m - 1.0) > tol_mass)
        throw NumericalError("density field mass " + std::to_string(m) +
                                 " outside tolerance of 1",
                             std::abs(m - 1.0));
    const double mx = max_value();
    if (min_value() < -1e-4 * mx)
        throw NumericalError("density field has negative lobes beyond the Gibbs allowance",
                             -min_value() / mx);
}

void DensityField::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out << (grid.d == 1 ? "x,value\n" : "x1,x2,value\n");
    out.precision(12);
    for (long i = 0; i < grid.size(); ++i) {
        const Vec p = grid.node(i);
        if (grid.d == 1)
            out << p[0] << ',' << values[static_cast<size_t>(i)] << '\n';
        else
            out << p[0] << ',' << p[1] << ',' << values[static_cast<size_t>(i)] << '\n';
    }
}

void DensityField::write_json_sidecar(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out.precision(12);
    out << "{\n  \"provenance\": \"" << provenance << "\",\n  \"t\": " << t
        << ",\n  \"dimension\": " << grid.d << ",\n  \"grid\": {\"lo\": " << grid.lo[0]
        << ", \"hi\": " << grid.hi[0] << ", \"n\": " << grid.n[0] << "},\n  \"mass\": " << mass()
        << ",\n  \"truncation_warning\": " << (truncation_warning ? "true" : "false")
        << ",\n  \"cf_edge_mass\": " << cf_edge_mass << "\n}\n";
}

} // namespace stablekit
