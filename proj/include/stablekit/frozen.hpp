#pragma once

#include <memory>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "stablekit/grid.hpp"
#include "stablekit/model.hpp"

namespace stablekit {

/// Uniform centered frequency grid with its dual spatial grid.
struct FrequencyGrid {
    int d = 1;
    int n = 4096;      // nodes per axis, power of two
    double dxi = 0.1;  // spacing

    double xi_max() const { return 0.5 * n * dxi; }
    double dual_spacing() const { return 2.0 * 3.14159265358979323846 / (n * dxi); }
    Grid dual() const;

    double nyquist_record = 0.0;  // e^{-sigma0 t Xi^alpha} at the edge
    bool nyquist_ok = true;
    bool capped = false;  // extent limited by the pipeline grid resolution
};

/// Frequency extent from the fitted lower stable bound: sigma0 t Xi^alpha >= 23.
/// xi_cap > 0 limits the extent (internal pipeline fields); the returned grid
/// records whether the criterion was met.
FrequencyGrid choose_frequency_grid(const ModelSpec& model, const NumericalParams& params,
                                    double t, double alpha_z, double sigma0,
                                    double xi_cap = 0.0);

// ---------------------------------------------------------------------------
// Integrated cut exponent
// ---------------------------------------------------------------------------

/// \int_0^t psi_r^{z,cut}(xi) dr by the analytic (r,rho)-region reduction,
/// adaptive in rho; deterministic to ~1e-9 relative accuracy.
Complex integrated_cut_exponent(const ModelSpec& model, const NumericalParams& params,
                                const Vec& z, double t, const Vec& xi);

/// Shared-rule table of the per-atom radial factor G(s; alpha) with
/// \int_0^t psi_r^{z,cut}(xi) dr = lambda(z) sum_i w_i G(xi.l_i; alpha(z)).
/// Chebyshev stack across the model's alpha range, cubic in s.
class CutExponentTable {
public:
    CutExponentTable(double t, double s_frak, double s_max, double alpha_lo, double alpha_hi);
    Complex eval(double s, double alpha) const;
    double t() const { return t_; }

private:
    double t_ = 0.0, s_frak_ = 0.0, s_max_ = 0.0, ds_ = 0.0;
    std::vector<double> alphas_;
    std::vector<std::vector<Complex>> tables_;  // per alpha node
    std::vector<double> bary_;                  // barycentric weights
};

/// Direct (table-free) evaluation of G(s; alpha), used by the table builder
/// and the scalar integrated_cut_exponent.
Complex cut_exponent_radial(double s, double alpha, double t, double s_frak,
                            int refinement = 1);

// ---------------------------------------------------------------------------
// Frozen fields
// ---------------------------------------------------------------------------

/// Inverted frozen density bundle at one (z,t): value, gradient and Hessian
/// tables on the (cropped) dual grid.
struct FrozenField {
    int d = 1;
    double t = 0.0, alpha = 0.0, lambda = 0.0;
    Grid grid;  // cropped window of the dual grid
    std::vector<double> value;
    std::array<std::vector<double>, 2> grad;
    std::array<std::vector<double>, 3> hess;  // xx[, xy, yy]
    std::vector<double> cdf;  // d=1: cumulative integral of value along the axis
    double mass = 0.0;
    double sup_value = 0.0;
    double imag_residual = 0.0;  // max |Im| of the inversion (sanity)
    bool truncation_warning = false;
    double cf_edge = 0.0;  // max |CF| on the frequency edge shell

    double p(const Vec& w) const;
    Vec gradp(const Vec& w) const;
    double hess_quad(const Vec& w, const Vec& u) const;
    /// d=1: \int_{-inf}^{w} p; 0 below the window, mass above it.
    double cdf_at(const Vec& w) const;
    bool inside(const Vec& w) const { return grid.contains(w); }
};

FrozenField build_frozen_field(const ModelSpec& model, const NumericalParams& params,
                               const Vec& z, double t, const CutExponentTable& table,
                               double sigma0, double xi_cap = 0.0);

/// Public operation: frozen density p_t^{z,cut} on the dual grid.
/// Doubles the grid once if the truncation criterion fails, then errors.
DensityField frozen_density(const ModelSpec& model, const NumericalParams& params,
                            const Vec& z, double t);

/// Stable density pair: direct inversion of e^{-t psi^{z,upsilon}} on the dual
/// grid, and the scaled shape t^{-d/a} g^z(./t^{1/a}) on the same grid.
struct StableDensityPair {
    DensityField direct;
    DensityField scaled_shape;
};
StableDensityPair stable_density(const ModelSpec& model, const Vec& z, double t);

/// Scaled stable shape evaluator g-shape cache: evaluates
/// t^{-d/alpha(z)} g^z((w)/t^{1/alpha(z)}) via a per-signature reference field.
class StableShapeCache {
public:
    explicit StableShapeCache(const ModelSpec& model);
    ~StableShapeCache();
    double scaled(const Vec& z, double t, const Vec& w);  // thread-safe
    double shape_mass(const Vec& z);

private:
    struct Entry;
    const Entry& entry_for(const Vec& z);
    const ModelSpec& model_;
    std::unordered_map<long long, std::unique_ptr<Entry>> map_;
    std::shared_mutex mu_;
};

// ---------------------------------------------------------------------------
// Zero-order approximation and its cache
// ---------------------------------------------------------------------------

/// Evaluation handle: rotation-aware view of a cached frozen field.
struct FrozenHandle {
    const FrozenField* f = nullptr;
    Mat2 rot;  // rotation of sigma at z
    bool rotated = false;

    double p(const Vec& w) const { return f->p(rotated ? rot.apply_transpose(w) : w); }
    Vec gradp(const Vec& w) const {
        if (!rotated) return f->gradp(w);
        return rot.apply(f->gradp(rot.apply_transpose(w)));
    }
    double hess_quad(const Vec& w, const Vec& u) const {
        if (!rotated) return f->hess_quad(w, u);
        return f->hess_quad(rot.apply_transpose(w), rot.apply_transpose(u));
    }
};

/// Read-mostly cache of frozen fields keyed by the coefficient signature at z
/// and the time node.  Rotation-equivalent z's share one field.
class FrozenCache {
public:
    /// xi_cap limits the frequency extent (0 = none); dual_extent is the
    /// spatial range the inverted fields must cover (0 = default grid).
    FrozenCache(const ModelSpec& model, const NumericalParams& params, double xi_cap = 0.0,
                double dual_extent = 0.0);

    FrozenHandle at(const Vec& z, double t);
    /// Parallel warm-up over the given nodes (deterministic: key list is sorted).
    void prebuild(const std::vector<Vec>& zs, const std::vector<double>& ts);
    size_t size() const { return fields_.size(); }

private:
    const CutExponentTable& table_for(double t);
    const ModelSpec& model_;
    NumericalParams params_;
    double xi_cap_;
    std::unordered_map<long long, std::unique_ptr<FrozenField>> fields_;
    std::unordered_map<long long, std::unique_ptr<CutExponentTable>> tables_;
    std::unordered_map<long long, double> sigma0_;
    std::shared_mutex mu_;
};

/// p0_t(x,y) = p_t^{y,cut}(kappa_t(y) - x); solves the backward flow itself.
/// Points outside the certified support evaluate to 0.
double zero_order(const ModelSpec& model, const NumericalParams& params, const Vec& x,
                  const Vec& y, double t, FrozenCache& cache);

// ---------------------------------------------------------------------------
// Diagnostic bounding kernels (pointwise formulas)
// ---------------------------------------------------------------------------

/// f_{t,a,c}(x) = t^{-ad} e^{-c |x| t^{-a}}.
double bound_f(double t, double a, double c, const Vec& x);

/// K^{0;c}_t = f_{t,zeta(y),c}(kappa_t(y)-x).
double bound_K0(const NumericalParams& params, double t, double alpha_y,
                const Vec& kappa_y_minus_x);

/// K^{1;c}_t with the indicator split at |y-chi_t(x)| = t^delta.
double bound_K1(const NumericalParams& params, const ModelSpec& model, double t,
                double alpha_x, const Vec& y_minus_chi);

} // namespace stablekit
