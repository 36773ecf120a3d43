#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stablekit/frozen.hpp"
#include "stablekit/grid.hpp"
#include "stablekit/model.hpp"

namespace stablekit {

/// Kernel values on (graded time mesh) x (x-grid) x (y-grid).
struct SpaceTimeField {
    std::vector<double> times;  // ascending, in (0, T]
    Grid gx, gy;
    std::vector<double> v;  // [it][ix][iy] row-major
    double sing_rate = 0.0;  // fitted exponent r of sup_x int |v| dy ~ t^r

    long nx() const { return gx.size(); }
    long ny() const { return gy.size(); }
    size_t idx(size_t it, long ix, long iy) const {
        return (it * static_cast<size_t>(nx()) + static_cast<size_t>(ix)) *
                   static_cast<size_t>(ny()) +
               static_cast<size_t>(iy);
    }
    double at(size_t it, long ix, long iy) const { return v[idx(it, ix, iy)]; }

    /// sup over x-nodes of the y-trapezoid of |v| at time node it.
    double norm_inf1(size_t it) const;
    /// Least-squares log-log fit of norm_inf1 over the mesh; stores sing_rate.
    double fit_sing_rate();

    /// Time slab interpolated at s (regularized by s^{-sing_rate}), written
    /// into out (size nx*ny).  Below the first node the shape is frozen.
    void slab_at(double s, std::vector<double>& out) const;

    void write_binary(const std::string& path) const;  // row-major + JSON header
};

/// Graded mesh t_k = T (k/M)^{1/eps} merged with the required output times.
std::vector<double> graded_time_mesh(double t_max, int nodes, double eps,
                                     const std::vector<double>& include = {});

/// Per-term breakdown of the error kernel Phi.
struct PhiTerms {
    double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, b1 = 0, b2 = 0;
    double total() const { return a1 + a2 + a3 + a4 + a5 + a6 + b1 + b2; }
};

/// One-shot evaluation of Phi_t(x,y) (solves the flows it needs).
PhiTerms phi_kernel(const ModelSpec& model, const NumericalParams& params, double t,
                    const Vec& x, const Vec& y, FrozenCache& cache);

/// Precomputed flow/drift state shared by grid-level evaluations.
struct PipelineContext {
    const ModelSpec* model = nullptr;
    NumericalParams params;
    Grid grid;                    // shared x = y = z grid
    std::vector<double> tmesh;    // ascending
    FrozenCache* cache = nullptr;

    std::vector<Vec> kappa;    // [it][iy] backward flow at (t, y)
    std::vector<Vec> bkappa;   // B_t(kappa_t(y))
    std::vector<Vec> chi;      // [it][ix] forward flow
    std::vector<Vec> bt;       // [it][ix] compensated drift b_t(x)

    size_t fidx(size_t it, long i) const {
        return it * static_cast<size_t>(grid.size()) + static_cast<size_t>(i);
    }
    static PipelineContext build(const ModelSpec& model, const NumericalParams& params,
                                 const Grid& grid, const std::vector<double>& tmesh,
                                 FrozenCache& cache);
};

PhiTerms phi_eval(const PipelineContext& ctx, size_t it, long ix, long iy);

/// Full Phi field over the context mesh and grid (parallel over node pairs).
SpaceTimeField phi_field(const PipelineContext& ctx);

/// Space-time convolution (a * b)_t(x,y) = int_0^t sum_z a_s(x,z) b_{t-s}(z,y) dz ds
/// on shared grids, with endpoint substitutions driven by the singularity
/// records.  Throws if b's record is not integrable.
SpaceTimeField spacetime_convolve(const SpaceTimeField& a, const SpaceTimeField& b);

/// Small-time closures: analytic action of a kernel when its time argument is
/// below the resolvable mesh (delta-like concentration).
struct SmallTimeClosures {
    // g is sampled along z; returns int a_s(x,dz) g(z) semi-analytically.
    std::function<double(double s, const Vec& anchor,
                         const std::function<double(const Vec&)>& g)>
        left;   // for the left factor at s -> 0
    std::function<double(double sigma, const Vec& anchor,
                         const std::function<double(const Vec&)>& g)>
        right;  // for the right factor at t-s -> 0
    double cut_fraction = 0.0;  // closure region: s < cut_fraction * t
};

/// Pipeline-internal convolution with endpoint closures.
SpaceTimeField convolve_with_closures(const SpaceTimeField& a, const SpaceTimeField& b,
                                      const SmallTimeClosures& clos);

/// Decay/fit summary of the residual R_t = p_t - principal term.
struct ResidualReport {
    std::vector<double> times;
    std::vector<double> norm_inf1;   // ||R_t||_{infty,1}
    std::vector<double> norm_sup;    // sup |R_t|
    std::vector<double> mass;        // grid mass of p_t per time, per x max deviation
    double eps_R_inf1 = 0.0;         // fitted slope of log ||R||_{inf,1} vs log t
    double eps_R_inf1_stderr = 0.0;
    double eps_R_sup = 0.0;          // slope of sup|R_t| t^{d/alpha_min}
    double neumann_tail_bound = 0.0; // analytic bound on the dropped terms
    int terms_used = 0;
    std::vector<double> phi_power_norms;  // ||Phi^{*k}||_{inf,1} at t_max
    std::string to_json() const;
};

/// Parametrix density: p = p0 + p0 * (sum_k Phi^{*k}) on the context grid.
struct NeumannResult {
    SpaceTimeField density;       // p at the requested times only
    SpaceTimeField correction;    // p - p0 on the mesh (diagnostic)
    ResidualReport report;
    std::vector<double> requested_times;
};
NeumannResult neumann_density(const ModelSpec& model, const NumericalParams& params,
                              const std::vector<double>& t_list, const Grid& grid);

/// Norms/fits of an existing density field against the scaled stable term.
ResidualReport residual_norms(const NeumannResult& result, const ModelSpec& model,
                              const NumericalParams& params);

/// Theorem-3 condition integrals (set-e32/e34/e36) by the Fubini
/// rearrangement; returns the value at (t,v).
enum class ConditionKind { E32, E34, E36 };
double condition_integral(const ModelSpec& model, ConditionKind kind, double t, const Vec& v,
                          double aux_q, double aux_alpha, double aux_r);

/// Sweep over t returning the fitted power of t.
struct ConditionSweep {
    std::vector<double> times, values;
    double fitted_exponent = 0.0;
};
ConditionSweep condition_sweep(const ModelSpec& model, ConditionKind kind, const Vec& v,
                               double aux_q, double aux_alpha, double aux_r,
                               const std::vector<double>& times);

} // namespace stablekit
