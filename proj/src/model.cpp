#include "stablekit/model.hpp"

#include <algorithm>
#include <cmath>

#include "stablekit/quadrature.hpp"

namespace stablekit {

static const double kPi = 3.14159265358979323846;

std::vector<std::pair<Vec, double>> PerturbationKernel::atoms_at(const Vec& x, int d) const {
    if (kind != Kind::Atoms)
        throw Error("perturbation kernel: tail-of-mu form has no atom list");
    std::vector<std::pair<Vec, double>> out;
    out.reserve(atoms.size());
    for (const auto& g : atoms) {
        Vec u = zero_vec(d);
        for (int c = 0; c < d; ++c) u[c] = g.jump[static_cast<size_t>(c)].eval(x);
        out.emplace_back(u, g.mass.eval(x));
    }
    return out;
}

Vec ModelSpec::drift_at(const Vec& x) const {
    Vec b = zero_vec(d);
    for (int c = 0; c < d; ++c)
        if (!drift[static_cast<size_t>(c)].empty()) b[c] = drift[static_cast<size_t>(c)].eval(x);
    return b;
}

bool ModelSpec::has_drift_term() const {
    for (int c = 0; c < d; ++c)
        if (!drift[static_cast<size_t>(c)].empty()) return true;
    return false;
}

void ModelSpec::check_basic() const {
    if (d != 1 && d != 2) throw DimensionError("model dimension must be 1 or 2");
    if (sigma.d != d) throw DimensionError("spherical measure dimension mismatch");
    sigma.validate();
    if (alpha.empty() || lambda.empty()) throw Error("model: alpha and lambda are required");
    if (!(alpha_min > 0.0 && alpha_min <= alpha_max && alpha_max < 2.0))
        throw Error("model: declared alpha bounds must satisfy 0 < a_min <= a_max < 2");
    if (!(lambda_min > 0.0 && lambda_min <= lambda_max))
        throw Error("model: declared lambda bounds must satisfy 0 < l_min <= l_max");
}

NumericalParams NumericalParams::defaults_for(const ModelSpec& m) {
    NumericalParams p;
    p.eps_B = 0.25 * std::min(m.h_frak, m.eps_balance);
    p.s_frak = m.eta * std::min(m.eps_nu(), p.eps_B) / (16.0 * m.d);
    p.m_frak = std::min(0.5 * (2.0 - m.alpha_max), 0.25 * m.h_frak * m.alpha_min * m.alpha_min);
    const double zmin = 1.0 / m.alpha_max - p.s_frak;
    p.delta_K1 = std::min(0.45 / m.alpha_max, 0.9 * zmin);
    p.N_K1 = static_cast<int>(std::ceil(m.d + (m.d + 3.0) / m.alpha_min)) + 1;
    return p;
}

NumericalParams NumericalParams::recommended(const ModelSpec& m) {
    NumericalParams p = defaults_for(m);
    p.s_frak = 0.42 / m.alpha_max;
    const double zmin = 1.0 / m.alpha_max - p.s_frak;
    p.delta_K1 = std::min(0.45 / m.alpha_max, 0.9 * zmin);
    return p;
}

void NumericalParams::validate(const ModelSpec& m) const {
    const double lim = 0.5 / m.alpha_max;
    if (!(s_frak > 0.0 && s_frak < lim))
        throw Error("params: s_frak must lie in (0, 1/(2 alpha_max))");
    if (!(m_frak > 0.0 && m_frak < 2.0 - m.alpha_max))
        throw Error("params: m_frak must lie in (0, 2 - alpha_max)");
    if (!(delta_K1 < lim)) throw Error("params: delta_K1 must be < 1/(2 alpha_max)");
    if (!(zeta_min(m) > lim))
        throw Error("params: zeta_min = 1/alpha_max - s_frak must exceed 1/(2 alpha_max)");
    if (K_max < 1) throw Error("params: K_max must be >= 1");
}

// ---------------------------------------------------------------------------
// Radial exponent integral
// ---------------------------------------------------------------------------

namespace {

// Compensated integrand (1 - e^{iu} + iu) u^{-1-alpha}; Taylor series below
// u=1e-3 removes the cancellation.
Complex comp_integrand(double u, double alpha) {
    const double p = std::pow(u, -1.0 - alpha);
    if (u < 1e-3) {
        const double u2 = u * u;
        return Complex(0.5 * u2 - u2 * u2 / 24.0, u2 * u / 6.0 - u2 * u2 * u / 120.0) * p;
    }
    return Complex(1.0 - std::cos(u), u - std::sin(u)) * p;
}

Complex noncomp_integrand(double u, double alpha) {
    return Complex(1.0 - std::cos(u), -std::sin(u)) * std::pow(u, -1.0 - alpha);
}

// Analytic integral of the 4-term Taylor part on [0, u0].
Complex taylor_head(double u0, double alpha) {
    const double r2 = std::pow(u0, 2.0 - alpha) / (2.0 * (2.0 - alpha));
    const double r4 = std::pow(u0, 4.0 - alpha) / (24.0 * (4.0 - alpha));
    const double i3 = std::pow(u0, 3.0 - alpha) / (6.0 * (3.0 - alpha));
    const double i5 = std::pow(u0, 5.0 - alpha) / (120.0 * (5.0 - alpha));
    return {r2 - r4, i3 - i5};
}

// \int_a^b with geometric panels near zero (power-law integrand) and
// oscillation-resolving linear panels beyond.
template <typename F>
Complex graded_panels(F&& f, double a, double b) {
    if (b <= a) return {0.0, 0.0};
    Complex acc{0.0, 0.0};
    double lo = a;
    const double geo_end = std::min(b, 2.0);
    while (lo < geo_end) {
        const double hi = std::min(geo_end, 2.0 * lo);
        acc += gauss10(f, lo, hi);
        lo = hi;
    }
    if (b > geo_end) {
        const int panels = std::max(2, static_cast<int>(std::ceil((b - geo_end) / 1.5)));
        acc += composite_gauss(f, geo_end, b, std::min(panels, 40000));
    }
    return acc;
}

Complex comp_range(double a, double b, double alpha) {
    return graded_panels([&](double u) { return comp_integrand(u, alpha); }, a, b);
}

Complex noncomp_range(double a, double b, double alpha) {
    return graded_panels([&](double u) { return noncomp_integrand(u, alpha); }, a, b);
}

} // namespace

Complex stable_radial_integral(double s, double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0))
        throw Error("stable_radial_integral: alpha must lie in (0,2)");
    if (s == 0.0) return {0.0, 0.0};
    if (s < 0.0) return std::conj(stable_radial_integral(-s, alpha));

    const double u0 = std::min(s, 1e-3);
    Complex acc = taylor_head(u0, alpha);
    const double sa = std::pow(s, alpha);
    if (s <= 1.0) {
        acc += comp_range(u0, s, alpha);
        acc += noncomp_range(s, 1.0, alpha);
        acc += Complex(1.0 / alpha, 0.0) - oscillatory_tail(1.0, alpha);
    } else {
        acc += comp_range(u0, s, alpha);
        acc += Complex(std::pow(s, -alpha) / alpha, 0.0) - oscillatory_tail(s, alpha);
    }
    return sa * acc;
}

std::pair<Complex, Complex> stable_exponent(const ModelSpec& model, const Vec& z,
                                            const Vec& xi) {
    if (!std::isfinite(xi[0]) || !std::isfinite(xi[1]))
        throw Error("stable_exponent: xi must be finite");
    const double a = model.alpha_at(z);
    const double lam = model.lambda_at(z);
    const SphericalMeasure sig = model.sigma_at(z);
    Complex psi(0.0, 0.0);
    for (size_t i = 0; i < sig.size(); ++i) {
        const double s = xi.dot(sig.dirs[i]);
        psi += sig.weights[i] * stable_radial_integral(s, a);
    }
    psi *= lam;
    const Vec ups = intrinsic_drift(model, z);
    const Complex with_drift = psi - Complex(0.0, xi.dot(ups));
    return {psi, with_drift};
}

Vec intrinsic_drift(const ModelSpec& model, const Vec& z) {
    const SphericalMeasure sig = model.sigma_at(z);
    Vec v = zero_vec(model.d);
    for (size_t i = 0; i < sig.size(); ++i) v += sig.weights[i] * sig.dirs[i];
    return model.lambda_at(z) * v;
}

double mu_tail_mass(const ModelSpec& model, const Vec& x, double r) {
    if (r <= 0.0) throw Error("mu_tail_mass: radius must be positive");
    const double a = model.alpha_at(x);
    return model.lambda_at(x) * std::pow(r, -a) / a;
}

double nu_tail_mass(const ModelSpec& model, const Vec& x, double r) {
    if (!model.nu) return 0.0;
    const PerturbationKernel& nu = *model.nu;
    if (nu.kind == PerturbationKernel::Kind::MuTail) {
        return -mu_tail_mass(model, x, std::max(r, nu.mu_tail_q));
    }
    double sum = 0.0;
    for (const auto& [u, m] : nu.atoms_at(x, model.d))
        if (u.norm() > r) sum += m;
    return sum;
}

double fitted_sigma0(const ModelSpec& model, const Vec& z, int directions) {
    double best = 1e300;
    for (int k = 0; k < directions; ++k) {
        Vec v = zero_vec(model.d);
        if (model.d == 1) {
            v[0] = (k % 2 == 0) ? 1.0 : -1.0;
            if (k >= 2) break;
        } else {
            const double ang = 2.0 * kPi * k / directions;
            v = Vec(std::cos(ang), std::sin(ang));
        }
        best = std::min(best, stable_exponent(model, z, v).first.real());
    }
    return best;
}

double stable_cosine_coefficient(double alpha) {
    if (std::abs(alpha - 1.0) < 1e-9) return kPi / 2.0;
    return std::tgamma(2.0 - alpha) * std::cos(kPi * alpha / 2.0) / (alpha * (1.0 - alpha));
}

} // namespace stablekit
