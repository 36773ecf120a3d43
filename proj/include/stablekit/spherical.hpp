#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stablekit/common.hpp"

namespace stablekit {

/// Orthogonal-matrix field x -> R(x) applied to all atom directions.
/// "align-e1" realizes the rotation-SDE coefficient: identity for |x| <= r_inner,
/// the rotation sending e1 to x/|x| for |x| >= r_outer, and the geodesic
/// interpolation (smoothstep in |x|) in between.
struct RotationMap {
    enum class Kind { None, AlignE1 };
    Kind kind = Kind::None;
    double r_inner = 1.0;
    double r_outer = 2.0;

    bool active() const { return kind != Kind::None; }
    Mat2 at(const Vec& x) const;
    std::string name() const { return kind == Kind::None ? "null" : "align-e1"; }
};

/// Finite-atom probability measure on S^{d-1}.
/// Directions are unit vectors; weights sum to 1.  Optionally the whole atom
/// set is rotated by an x-dependent orthogonal map (shared atom index).
struct SphericalMeasure {
    int d = 1;
    std::vector<Vec> dirs;
    std::vector<double> weights;
    RotationMap rotation;

    size_t size() const { return dirs.size(); }

    /// Checks the probability-measure invariants (weights sum to 1 within
    /// 1e-12, unit directions within 1e-12).  Throws Error on violation.
    void validate() const;

    /// Measure with the rotation at x baked into the directions.
    SphericalMeasure at(const Vec& x) const;

    /// True if every atom has a matching atom in the opposite direction with
    /// equal weight (up to 1e-12).
    bool is_symmetric() const;
};

/// Symmetric pair ½(δ_{+e1} + δ_{-e1}) etc.
SphericalMeasure symmetric_pair_1d();
SphericalMeasure single_atom_1d(double sign = 1.0);
SphericalMeasure cross_2d();

/// Exact Wasserstein-1 distance between two finite-atom measures with ground
/// cost |l1 - l2| (chordal), via a transportation-simplex solve.
/// Throws DimensionError if the measures live in different dimensions.
double w1_sphere(const SphericalMeasure& P, const SphericalMeasure& Q);

/// Exact optimal-transport cost between weighted point sets (used by w1_sphere
/// and directly testable against brute-force enumeration).
double transport_cost(const std::vector<Vec>& p_pts, const std::vector<double>& p_w,
                      const std::vector<Vec>& q_pts, const std::vector<double>& q_w);

} // namespace stablekit
