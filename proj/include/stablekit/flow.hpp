#pragma once

#include <functional>
#include <vector>

#include "stablekit/model.hpp"

namespace stablekit {

/// Friedrichs bump w(x) = Z exp(-1/(1-|x|^2)) on |x|<1, scaled family
/// w_h(x) = h^{-d} w(x/h).  Z normalizes the integral to 1 per dimension.
struct Mollifier {
    int d = 1;

    explicit Mollifier(int dim);
    double normalization() const { return z_; }
    /// w_h evaluated at x.
    double value(const Vec& x, double h) const;

private:
    double z_ = 0.0;
};

/// Dynamically compensated drift b_t(x) = b(x) - \int_{(1^t)^{1/a}<|u|<=1} u N(x,du).
/// The mu part is a closed-form radial integral per atom; the nu part is a
/// finite signed sum (atoms) or a closed form (tail-of-mu).
Vec compensated_drift(const ModelSpec& model, const Vec& x, double t);

/// Mollified drift B_t(x): bump average of b_t at scale t^{1/theta(x)} by
/// tensor Gauss quadrature.  Satisfies the Lipschitz bound Lip(B_t) <~ t^{-1+eps_B}.
Vec mollified_drift(const ModelSpec& model, const NumericalParams& params, const Vec& x,
                    double t);

enum class FlowDirection { Forward, Backward, Anchored };

/// Deterministic flow driven by the mollified drift: forward chi_t, backward
/// kappa_t, or the anchored field chi^t_s with d/ds chi = B_{t-s}(chi).
struct FlowSolution {
    std::vector<double> times;      // graded mesh, ascending, times.front() == 0
    std::vector<Vec> positions;     // per node
    FlowDirection direction = FlowDirection::Forward;
    double horizon = 0.0;           // t for Anchored

    /// Cubic (Catmull-Rom in t) interpolation of the trajectory.
    Vec at(double t) const;
    const Vec& terminal() const { return positions.back(); }
};

/// Integrate the flow ODE on a graded mesh t_k = T (k/K)^{1/eps_B} with
/// adaptive RK4 (step doubling, local error 1e-8).
FlowSolution solve_flow(const ModelSpec& model, const NumericalParams& params,
                        const Vec& seed, double t, FlowDirection dir);

/// Core integrator over an arbitrary time-dependent field, used by
/// solve_flow and directly testable on synthetic fields.
FlowSolution solve_flow_field(const std::function<Vec(double, const Vec&)>& field,
                              const Vec& seed, double t, double grading_eps,
                              FlowDirection dir);

/// Stable-drift correction W(t,s,x) = t^{-1/a(x)} (upsilon(x)/a(x))
/// \int_s^t r^{1/a(x)-2} dr in closed form (log branch at a(x)=1).
Vec w_correction(const ModelSpec& model, double t, double s, const Vec& x);

/// \int_a^b rho^{-p} drho with the log branch at p=1.
double radial_power_integral(double a, double b, double p);

} // namespace stablekit
