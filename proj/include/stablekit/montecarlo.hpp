#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stablekit/grid.hpp"
#include "stablekit/model.hpp"

namespace stablekit {

/// Counter-based RNG stream: state derived from (seed, stream id), so path
/// streams are independent of thread scheduling.
struct RngStream {
    uint64_t s0, s1;

    RngStream(uint64_t seed, uint64_t stream);
    uint64_t next_u64();
    double uniform();       // (0,1)
    double exponential();   // rate 1
    double normal();        // standard
};

/// Monte Carlo sample of terminal positions.
struct PathEnsemble {
    std::vector<Vec> terminal;
    std::vector<std::vector<Vec>> skeletons;  // optional (empty by default)
    uint64_t seed = 0;
    double h = 0.0;
    long n = 0;
    std::string scheme;

    void write_csv(const std::string& path) const;
    void write_json_sidecar(const std::string& path) const;
};

/// i.i.d. samples of the stable law with Levy measure lambda * (polar form)
/// frozen at one state, compensation 1_{|u|<=1} (matches psi^z of the model).
/// Chambers-Mallows-Stuck per atom direction.
std::vector<Vec> sample_stable(double alpha, const SphericalMeasure& atoms, double lambda,
                               long n, uint64_t seed);

/// One-dimensional totally skewed marginal along a single ray with intensity c:
/// exponent c * I(s; alpha) in the model's convention.
double sample_stable_ray(double alpha, double c, RngStream& rng);

/// Frozen-coefficient Euler scheme for the full generator L.
/// scheme "cms": exact per-step stable increment (models without tail removal);
/// scheme "jump": Poisson big jumps + small-jump Gaussian proxy (used when nu
/// is a tail-of-mu removal, i.e. truncated noise).
PathEnsemble simulate_paths(const ModelSpec& model, const Vec& x0, double t, double h, long n,
                            uint64_t seed);

/// Truncated-noise variant: suppresses all mu-jumps of radial size > q.
PathEnsemble simulate_paths_truncated(const ModelSpec& model, const Vec& x0, double t,
                                      double h, long n, uint64_t seed, double q);

/// Histogram density on the grid (counts / (n * cell volume)).
DensityField estimate_density(const PathEnsemble& ensemble, const Grid& grid);

/// Renewal identity report (exa-e06) for a truncated-noise pair.
struct RenewalReport {
    double lambda_tail = 0.0;   // mu(x, {|u|>q})
    double sup_discrepancy = 0.0;
    double l1_discrepancy = 0.0;
    double l1_left = 0.0;       // norm of the left side for relative checks
    double near_diagonal_mass = 0.0;  // int_{|x-y|<=t^{1/alpha}} p_t(x,y) dy
    std::string to_json() const;
};

/// Evaluates both sides of p_t = e^{-lambda t} p^trunc_t + lambda int_0^t
/// e^{-lambda s} (p_{t-s} * Y^tail p^trunc_s) ds on the grid.  The left side
/// (p) is supplied by the caller (parametrix or MC); the right side is built
/// from MC simulations of the truncated model.
RenewalReport renewal_check(const ModelSpec& model, double q, double t, const Grid& grid,
                            const Vec& x0, const std::vector<double>& p_left, long n_mc,
                            uint64_t seed);

} // namespace stablekit
