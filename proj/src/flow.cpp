#include "stablekit/flow.hpp"

#include <algorithm>
#include <cmath>

#include "stablekit/quadrature.hpp"

namespace stablekit {

namespace {

double bump_profile(double r2) {
    if (r2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r2));
}

// Gauss-Legendre rule on [-1,1], Newton-built once per order.
struct GaussRule {
    std::vector<double> x, w;
};

const GaussRule& gauss_rule(int order) {
    static GaussRule cache[3];  // orders 16, 24, 32
    const int slot = order == 16 ? 0 : (order == 24 ? 1 : 2);
    GaussRule& r = cache[slot];
    if (!r.x.empty()) return r;
    r.x.resize(static_cast<size_t>(order));
    r.w.resize(static_cast<size_t>(order));
    for (int i = 0; i < order; ++i) {
        double xi = std::cos(3.14159265358979323846 * (i + 0.75) / (order + 0.5));
        double p1 = xi, dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            p1 = xi;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (xi * p1 - p0) / (xi * xi - 1.0);
            const double step = p1 / dp;
            xi -= step;
            if (std::abs(step) < 1e-15) break;
        }
        r.x[static_cast<size_t>(i)] = xi;
        r.w[static_cast<size_t>(i)] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
    return r;
}

} // namespace

Mollifier::Mollifier(int dim) : d(dim) {
    // One-off normalization by fine quadrature over the unit ball.
    if (d == 1) {
        const double I =
            adaptive_quad([](double x) { return bump_profile(x * x); }, -1.0, 1.0, 1e-14);
        z_ = 1.0 / I;
    } else {
        // Radial form: int_0^1 2 pi r w(r^2) dr.
        const double I = adaptive_quad(
            [](double r) {
                return 2.0 * 3.14159265358979323846 * r * bump_profile(r * r);
            },
            0.0, 1.0, 1e-14);
        z_ = 1.0 / I;
    }
}

double Mollifier::value(const Vec& x, double h) const {
    const double scale = std::pow(h, -d);
    Vec y = x;
    y *= 1.0 / h;
    return z_ * scale * bump_profile(y.dot(y));
}

double radial_power_integral(double a, double b, double p) {
    if (a <= 0.0 || b <= 0.0) throw Error("radial_power_integral: bounds must be positive");
    if (std::abs(p - 1.0) < 1e-9) return std::log(b) - std::log(a);
    return (std::pow(b, 1.0 - p) - std::pow(a, 1.0 - p)) / (1.0 - p);
}

Vec compensated_drift(const ModelSpec& model, const Vec& x, double t) {
    if (t <= 0.0) throw Error("compensated_drift: t must be positive");
    Vec b = model.drift_at(x);
    const double a = model.alpha_at(x);
    const double lower = std::pow(std::min(1.0, t), 1.0 / a);
    if (lower >= 1.0) return b;

    // mu part: lambda(x) sum_i w_i l_i int_lower^1 rho^-alpha drho.
    const SphericalMeasure sig = model.sigma_at(x);
    const double J = radial_power_integral(lower, 1.0, a);
    Vec mu_moment = zero_vec(model.d);
    for (size_t i = 0; i < sig.size(); ++i) mu_moment += sig.weights[i] * sig.dirs[i];
    mu_moment *= model.lambda_at(x) * J;
    b -= mu_moment;

    if (model.nu) {
        const PerturbationKernel& nu = *model.nu;
        if (nu.kind == PerturbationKernel::Kind::Atoms) {
            for (const auto& [u, m] : nu.atoms_at(x, model.d)) {
                const double r = u.norm();
                if (r > lower && r <= 1.0) b -= m * u;
            }
        } else {
            // nu = -mu 1_{|u|>q}: annulus moment flips sign on (max(lower,q), 1].
            const double q = nu.mu_tail_q;
            if (q < 1.0) {
                const double J2 = radial_power_integral(std::max(lower, q), 1.0, a);
                Vec m2 = zero_vec(model.d);
                for (size_t i = 0; i < sig.size(); ++i) m2 += sig.weights[i] * sig.dirs[i];
                m2 *= model.lambda_at(x) * J2;
                b += m2;
            }
        }
    }
    return b;
}

Vec mollified_drift(const ModelSpec& model, const NumericalParams& params, const Vec& x,
                    double t) {
    if (t <= 0.0 || t > 1.0) throw Error("mollified_drift: t must lie in (0,1]");
    static const Mollifier moll1(1);
    static const Mollifier moll2(2);
    const Mollifier& moll = model.d == 1 ? moll1 : moll2;
    const double h = std::pow(t, 1.0 / params.theta(model, x));

    // Tensor Gauss-Legendre over the support cube, restricted by the bump.
    auto integrate = [&](int order) {
        const GaussRule& rule = gauss_rule(order);
        const std::vector<double>& gx = rule.x;
        const std::vector<double>& gw = rule.w;
        // Self-normalizing: dividing by the rule's own bump mass makes the
        // average of a constant exact.
        Vec acc = zero_vec(model.d);
        double norm = 0.0;
        if (model.d == 1) {
            for (int i = 0; i < order; ++i) {
                const double yi = x[0] + h * gx[static_cast<size_t>(i)];
                const double w =
                    gw[static_cast<size_t>(i)] * h * moll.value(Vec(h * gx[static_cast<size_t>(i)]), h);
                if (w == 0.0) continue;
                acc += w * compensated_drift(model, Vec(yi), t);
                norm += w;
            }
        } else {
            for (int i = 0; i < order; ++i)
                for (int j = 0; j < order; ++j) {
                    Vec off(h * gx[static_cast<size_t>(i)], h * gx[static_cast<size_t>(j)]);
                    const double w = gw[static_cast<size_t>(i)] * gw[static_cast<size_t>(j)] *
                                     h * h * moll.value(off, h);
                    if (w == 0.0) continue;
                    Vec y = x + off;
                    acc += w * compensated_drift(model, y, t);
                    norm += w;
                }
        }
        acc *= 1.0 / norm;
        return acc;
    };

    Vec v16 = integrate(16);
    Vec v24 = integrate(24);
    if ((v24 - v16).norm() > 1e-7 * (1.0 + v24.norm())) {
        Vec v32 = integrate(32);
        if ((v32 - v24).norm() > 1e-6 * (1.0 + v32.norm()))
            throw NumericalError("mollified_drift: quadrature did not settle",
                                 (v32 - v24).norm());
        return v32;
    }
    return v24;
}

// ---------------------------------------------------------------------------
// Flow integration
// ---------------------------------------------------------------------------

Vec FlowSolution::at(double t) const {
    const auto& ts = times;
    if (ts.empty()) throw Error("flow: empty solution");
    if (t <= ts.front()) return positions.front();
    if (t >= ts.back()) return positions.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const size_t hi = static_cast<size_t>(it - ts.begin());
    const size_t lo = hi - 1;
    // Catmull-Rom on the (non-uniform) mesh; fall back to linear at the ends.
    const double t0 = ts[lo], t1 = ts[hi];
    const double u = (t - t0) / (t1 - t0);
    if (lo == 0 || hi + 1 >= ts.size()) {
        return (1.0 - u) * positions[lo] + u * positions[hi];
    }
    const Vec& pm = positions[lo - 1];
    const Vec& p0 = positions[lo];
    const Vec& p1 = positions[hi];
    const Vec& pp = positions[hi + 1];
    const double tm = ts[lo - 1], tp = ts[hi + 1];
    Vec m0 = (1.0 / (t1 - tm)) * (p1 - pm) * (t1 - t0);
    Vec m1 = (1.0 / (tp - t0)) * (pp - p0) * (t1 - t0);
    const double u2 = u * u, u3 = u2 * u;
    return (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * m0 +
           (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * m1;
}

namespace {

Vec rk4_step(const std::function<Vec(double, const Vec&)>& f, double t, const Vec& y,
             double h) {
    const Vec k1 = f(t, y);
    const Vec k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const Vec k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const Vec k4 = f(t + h, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// One mesh interval with local error control by step doubling.
Vec advance(const std::function<Vec(double, const Vec&)>& f, double t0, double t1, Vec y) {
    double t = t0;
    double h = t1 - t0;
    int guard = 0;
    while (t < t1 - 1e-15 * (1.0 + t1)) {
        h = std::min(h, t1 - t);
        const Vec big = rk4_step(f, t, y, h);
        const Vec half = rk4_step(f, t + 0.5 * h, rk4_step(f, t, y, 0.5 * h), 0.5 * h);
        const double err = (big - half).norm();
        if (err < 1e-8 * (1.0 + half.norm())) {
            y = half;
            t += h;
            if (err < 1e-10) h *= 2.0;
        } else {
            h *= 0.5;
            if (h < 1e-14 * (1.0 + t1)) {
                throw NumericalError("flow: step size underflow (pathological drift)", err);
            }
        }
        if (++guard > 2000000) throw NumericalError("flow: too many steps");
    }
    return y;
}

} // namespace

FlowSolution solve_flow_field(const std::function<Vec(double, const Vec&)>& field,
                              const Vec& seed, double t, double grading_eps,
                              FlowDirection dir) {
    if (t <= 0.0) throw Error("solve_flow: t must be positive");
    const int K = 24;
    const double gexp = 1.0 / std::max(1e-3, std::min(1.0, grading_eps));
    FlowSolution sol;
    sol.direction = dir;
    sol.horizon = t;
    sol.times.push_back(0.0);
    sol.positions.push_back(seed);
    Vec y = seed;
    double prev = 0.0;
    for (int k = 1; k <= K; ++k) {
        const double tk = t * std::pow(static_cast<double>(k) / K, gexp);
        if (tk <= prev + 1e-16) continue;
        y = advance(field, prev, tk, y);
        sol.times.push_back(tk);
        sol.positions.push_back(y);
        prev = tk;
    }
    return sol;
}

FlowSolution solve_flow(const ModelSpec& model, const NumericalParams& params,
                        const Vec& seed, double t, FlowDirection dir) {
    if (!model.has_drift_term() && model.sigma.is_symmetric() && !model.nu) {
        // b_t == 0: the flow is constant. Short-circuit keeps the pipeline cheap.
        FlowSolution sol;
        sol.direction = dir;
        sol.horizon = t;
        sol.times = {0.0, t};
        sol.positions = {seed, seed};
        return sol;
    }
    std::function<Vec(double, const Vec&)> field;
    switch (dir) {
        case FlowDirection::Forward:
            field = [&model, &params](double s, const Vec& y) {
                return mollified_drift(model, params, y, s);
            };
            break;
        case FlowDirection::Backward:
            field = [&model, &params](double s, const Vec& y) {
                return -mollified_drift(model, params, y, s);
            };
            break;
        case FlowDirection::Anchored:
            field = [&model, &params, t](double s, const Vec& y) {
                return mollified_drift(model, params, y, t - s);
            };
            break;
    }
    // Guard the mollified drift against s=0 evaluations on the mesh ends.
    auto safe = [field](double s, const Vec& y) {
        return field(std::max(s, 1e-12), y);
    };
    return solve_flow_field(safe, seed, t, params.eps_B, dir);
}

Vec w_correction(const ModelSpec& model, double t, double s, const Vec& x) {
    if (!(0.0 <= s && s < t)) throw Error("w_correction: need 0 <= s < t");
    const double a = model.alpha_at(x);
    const Vec ups = intrinsic_drift(model, x);
    // int_s^t r^{1/a - 2} dr, log branch when 1/a - 2 == -1, i.e. a == 1.
    double J;
    if (std::abs(a - 1.0) < 1e-9) {
        if (s == 0.0) throw Error("w_correction: integral diverges at s=0 for alpha=1");
        J = std::log(t) - std::log(s);
    } else {
        const double p = 1.0 / a - 1.0;
        if (s == 0.0 && p < 0.0)
            throw Error("w_correction: integral diverges at s=0 for alpha>1");
        const double sp = s > 0.0 ? std::pow(s, p) : 0.0;
        J = (std::pow(t, p) - sp) / p;
    }
    return std::pow(t, -1.0 / a) / a * J * ups;
}

} // namespace stablekit
