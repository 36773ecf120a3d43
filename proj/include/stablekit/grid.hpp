#pragma once

#include <string>
#include <vector>

#include "stablekit/common.hpp"

namespace stablekit {

/// Regular spatial grid with inclusive endpoints.
struct Grid {
    int d = 1;
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{0.0, 0.0};
    std::array<int, 2> n{1, 1};

    static Grid line(double lo, double hi, int n);
    static Grid square(double lo, double hi, int n);

    double h(int axis) const {
        return n[static_cast<size_t>(axis)] > 1
                   ? (hi[static_cast<size_t>(axis)] - lo[static_cast<size_t>(axis)]) /
                         (n[static_cast<size_t>(axis)] - 1)
                   : 0.0;
    }
    long size() const { return static_cast<long>(n[0]) * (d == 2 ? n[1] : 1); }
    long index(int i, int j = 0) const { return static_cast<long>(i) * (d == 2 ? n[1] : 1) + j; }
    Vec node(long idx) const;
    double cell_volume() const { return d == 1 ? h(0) : h(0) * h(1); }

    /// Trapezoid weight (product of per-axis h, halved at the ends).
    double trapezoid_weight(long idx) const;

    bool contains(const Vec& x) const;
};

/// Catmull-Rom interpolation of grid values (tensor product in d=2).
/// Returns 0 outside the grid.
double cubic_interp(const Grid& g, const std::vector<double>& v, const Vec& x);

/// Scalar field on a regular grid with provenance metadata.
struct DensityField {
    Grid grid;
    std::vector<double> values;
    std::string provenance;       // which z, t, which exponent
    double t = 0.0;
    bool truncation_warning = false;
    double cf_edge_mass = 0.0;    // max |characteristic function| on the edge shell

    double mass() const;          // trapezoid integral
    double max_value() const;
    double min_value() const;
    double interpolate(const Vec& x) const { return cubic_interp(grid, values, x); }

    /// Type invariants: mass within tol_mass of 1, Gibbs-limited nonnegativity.
    void check_invariants(double tol_mass = 1e-2) const;

    /// Exports: CSV (coordinates, value) plus a JSON sidecar.
    void write_csv(const std::string& path) const;
    void write_json_sidecar(const std::string& path) const;
};

} // namespace stablekit
