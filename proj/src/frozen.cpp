#include "stablekit/frozen.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "stablekit/fft.hpp"
#include "stablekit/flow.hpp"
#include "stablekit/parallel.hpp"
#include "stablekit/quadrature.hpp"

namespace stablekit {

namespace {

const double kPi = 3.14159265358979323846;
const double kLog10Target = 24.0;  // e^-24 < 1e-10 with margin

// Non-compensated integrand (1 - e^{iu}) with Taylor switch.
inline Complex nc_f(double u) {
    if (std::abs(u) < 1e-3) {
        const double u2 = u * u;
        return {0.5 * u2 - u2 * u2 / 24.0, -u + u2 * u / 6.0};
    }
    return {1.0 - std::cos(u), -std::sin(u)};
}

// Compensated integrand (1 - e^{iu} + iu) with Taylor switch.
inline Complex comp_f(double u) {
    if (std::abs(u) < 1e-3) {
        const double u2 = u * u;
        return {0.5 * u2 - u2 * u2 / 24.0, u2 * u / 6.0 - u2 * u2 * u / 120.0};
    }
    return {1.0 - std::cos(u), u - std::sin(u)};
}

// Panelled integral of f over [a,b] with oscillation frequency s: geometric
// refinement toward a=0-like endpoints is the caller's job; here we split
// [a,b] into subpanels so the phase advance per panel stays below ~1.5/refine.
template <typename F>
Complex osc_panels(F&& f, double a, double b, double s, int refine) {
    if (b <= a) return {0.0, 0.0};
    const double phase = std::abs(s) * (b - a);
    const int n = std::max(1, static_cast<int>(std::ceil(phase * refine / 1.5)));
    return composite_gauss(f, a, b, std::min(n, 200000));
}

// Geometric panels from hi down toward lo (power-law integrand), each
// oscillation-split.  Assumes 0 < lo < hi.
template <typename F>
Complex geo_osc(F&& f, double lo, double hi, double s, int refine) {
    Complex acc{0.0, 0.0};
    double b = hi;
    while (b > lo * 1.0000000001) {
        const double a = std::max(lo, 0.5 * b);
        acc += osc_panels(f, a, b, s, refine);
        b = a;
    }
    return acc;
}

} // namespace

// ---------------------------------------------------------------------------
// Radial cut-exponent factor
// ---------------------------------------------------------------------------

Complex cut_exponent_radial(double s, double alpha, double t, double s_frak, int refinement) {
    if (s < 0.0) return std::conj(cut_exponent_radial(-s, alpha, t, s_frak, refinement));
    const double zeta = 1.0 / alpha - s_frak;
    const double T1 = std::pow(t, 1.0 / alpha);
    const double Tz = std::pow(t, zeta);
    const double q = 1.0 / zeta - alpha;  // > 0

    // D1: compensated part, weight (t - rho^alpha) on [0, T1].
    Complex D1{0.0, 0.0};
    {
        const double rho0 = s > 0.0 ? std::min(T1, 1e-3 / s) : T1;
        // analytic head below rho0
        const double s2 = s * s, s3 = s2 * s;
        D1 += Complex(0.5 * s2 * (t * std::pow(rho0, 2.0 - alpha) / (2.0 - alpha) -
                                  0.5 * rho0 * rho0),
                      s3 / 6.0 * (t * std::pow(rho0, 3.0 - alpha) / (3.0 - alpha) -
                                  rho0 * rho0 * rho0 / 3.0));
        if (rho0 < T1) {
            auto f = [&](double rho) {
                return comp_f(rho * s) * ((t - std::pow(rho, alpha)) * std::pow(rho, -1.0 - alpha));
            };
            D1 += geo_osc(f, rho0, T1, s, refinement);
        }
    }

    // D2a: non-compensated, weight (rho^alpha - rho^{1/zeta}) on [0, T1].
    Complex D2a{0.0, 0.0};
    {
        const double rho0 = s > 0.0 ? std::min(T1, 1e-3 / s) : T1;
        const double s2 = s * s, s3 = s2 * s;
        const double re = 0.5 * s2 * (0.5 * rho0 * rho0 - std::pow(rho0, q + 2.0) / (q + 2.0));
        const double im = -s * (rho0 - std::pow(rho0, q + 1.0) / (q + 1.0)) +
                          s3 / 6.0 * (rho0 * rho0 * rho0 / 3.0 - std::pow(rho0, q + 3.0) / (q + 3.0));
        D2a += Complex(re, im);
        if (rho0 < T1) {
            auto f = [&](double rho) {
                return nc_f(rho * s) *
                       ((std::pow(rho, alpha) - std::pow(rho, 1.0 / zeta)) *
                        std::pow(rho, -1.0 - alpha));
            };
            D2a += geo_osc(f, rho0, T1, s, refinement);
        }
    }

    // D2b: non-compensated, weight (t - rho^{1/zeta}) on [T1, Tz].
    Complex D2b{0.0, 0.0};
    if (Tz > T1) {
        auto f = [&](double rho) {
            return nc_f(rho * s) *
                   ((t - std::pow(rho, 1.0 / zeta)) * std::pow(rho, -1.0 - alpha));
        };
        D2b = geo_osc(f, T1, Tz, s, refinement);
    }
    return D1 + D2a + D2b;
}

Complex integrated_cut_exponent(const ModelSpec& model, const NumericalParams& params,
                                const Vec& z, double t, const Vec& xi) {
    if (!(t > 0.0 && t <= 1.0)) throw Error("integrated_cut_exponent: t must lie in (0,1]");
    const double a = model.alpha_at(z);
    const double lam = model.lambda_at(z);
    const SphericalMeasure sig = model.sigma_at(z);
    Complex acc{0.0, 0.0}, acc2{0.0, 0.0};
    for (size_t i = 0; i < sig.size(); ++i) {
        const double s = xi.dot(sig.dirs[i]);
        acc += sig.weights[i] * cut_exponent_radial(s, a, t, params.s_frak, 1);
        acc2 += sig.weights[i] * cut_exponent_radial(s, a, t, params.s_frak, 2);
    }
    const double scale = std::abs(acc2) + 1e-30;
    if (std::abs(acc - acc2) > 1e-8 * scale)
        throw NumericalError("integrated_cut_exponent: quadrature did not converge",
                             std::abs(acc - acc2) / scale);
    return lam * acc2;
}

// ---------------------------------------------------------------------------
// Cut exponent table
// ---------------------------------------------------------------------------

CutExponentTable::CutExponentTable(double t, double s_frak, double s_max, double alpha_lo,
                                   double alpha_hi)
    : t_(t), s_frak_(s_frak), s_max_(std::max(s_max, 1.0)) {
    if (alpha_hi - alpha_lo < 1e-12) {
        alphas_ = {alpha_lo};
        bary_ = {1.0};
    } else {
        const int m = 12;
        alphas_.resize(m);
        bary_.resize(m);
        for (int k = 0; k < m; ++k) {
            const double c = std::cos(kPi * (k + 0.5) / m);  // Chebyshev nodes
            alphas_[static_cast<size_t>(k)] =
                0.5 * (alpha_lo + alpha_hi) + 0.5 * (alpha_hi - alpha_lo) * c;
            bary_[static_cast<size_t>(k)] =
                (k % 2 == 0 ? 1.0 : -1.0) * std::sin(kPi * (k + 0.5) / m);
        }
    }
    // Spacing resolves the fastest s-oscillation ~ Tz = t^zeta_min.
    double tz_max = 0.0;
    for (double a : alphas_) tz_max = std::max(tz_max, std::pow(t, 1.0 / a - s_frak));
    ds_ = 0.03 / std::max(tz_max, 1e-6);
    const long m_nodes = static_cast<long>(std::ceil(s_max_ / ds_)) + 4;
    ds_ = s_max_ / static_cast<double>(m_nodes - 4);

    tables_.resize(alphas_.size());
    for (size_t ai = 0; ai < alphas_.size(); ++ai)
        tables_[ai].resize(static_cast<size_t>(m_nodes));
    for (size_t ai = 0; ai < alphas_.size(); ++ai) {
        const double a = alphas_[ai];
        auto& tab = tables_[ai];
        parallel_for(m_nodes, [&](long k) {
            tab[static_cast<size_t>(k)] =
                cut_exponent_radial(static_cast<double>(k) * ds_, a, t_, s_frak_, 1);
        });
    }
}

Complex CutExponentTable::eval(double s, double alpha) const {
    const bool neg = s < 0.0;
    s = std::abs(s);
    if (s > s_max_ + 1e-9) throw Error("cut exponent table: s out of range");
    s = std::min(s, s_max_);
    const double u = s / ds_;
    const long i0 = std::max(0L, std::min(static_cast<long>(tables_[0].size()) - 2,
                                          static_cast<long>(u)));
    const double f = u - static_cast<double>(i0);
    const double w0 = 0.5 * (-f * f * f + 2.0 * f * f - f);
    const double w1 = 0.5 * (3.0 * f * f * f - 5.0 * f * f + 2.0);
    const double w2 = 0.5 * (-3.0 * f * f * f + 4.0 * f * f + f);
    const double w3 = 0.5 * (f * f * f - f * f);
    auto sample = [&](const std::vector<Complex>& tab) {
        const long n = static_cast<long>(tab.size());
        const long im = std::max(0L, i0 - 1), ip = std::min(n - 1, i0 + 1),
                   ipp = std::min(n - 1, i0 + 2);
        return w0 * tab[static_cast<size_t>(im)] + w1 * tab[static_cast<size_t>(i0)] +
               w2 * tab[static_cast<size_t>(ip)] + w3 * tab[static_cast<size_t>(ipp)];
    };
    Complex val;
    if (alphas_.size() == 1) {
        val = sample(tables_[0]);
    } else {
        // Barycentric Chebyshev interpolation across the alpha stack.
        Complex num{0.0, 0.0};
        double den = 0.0;
        bool hit = false;
        for (size_t k = 0; k < alphas_.size(); ++k) {
            const double diff = alpha - alphas_[k];
            if (std::abs(diff) < 1e-13) {
                val = sample(tables_[k]);
                hit = true;
                break;
            }
            const double w = bary_[k] / diff;
            num += w * sample(tables_[k]);
            den += w;
        }
        if (!hit) val = num * (1.0 / den);
    }
    return neg ? std::conj(val) : val;
}

// ---------------------------------------------------------------------------
// Frequency grid selection and inversion
// ---------------------------------------------------------------------------

Grid FrequencyGrid::dual() const {
    const double dx = dual_spacing();
    const double ext = 0.5 * n * dx;
    Grid g;
    if (d == 1) {
        g = Grid::line(-ext, ext - dx, n);
    } else {
        g = Grid::square(-ext, ext - dx, n);
    }
    return g;
}

FrequencyGrid choose_frequency_grid(const ModelSpec& model, const NumericalParams& params,
                                    double t, double alpha_z, double sigma0, double xi_cap) {
    FrequencyGrid fg;
    fg.d = model.d;
    fg.n = params.freq_nodes(model.d);
    double xi = std::pow(kLog10Target / std::max(sigma0 * t, 1e-300), 1.0 / alpha_z);
    if (xi_cap > 0.0 && xi > xi_cap) {
        xi = xi_cap;
        fg.capped = true;
    }
    fg.dxi = 2.0 * xi / fg.n;
    fg.nyquist_record = std::exp(-sigma0 * t * std::pow(xi, alpha_z));
    fg.nyquist_ok = fg.nyquist_record < 1e-10;
    return fg;
}

namespace {

// Inverse Fourier transform of F on the centered frequency grid onto the
// centered dual grid, with (-1)^j checkerboard phases.  Returns real part and
// max |imaginary| residual.
struct InversionResult {
    std::vector<double> values;
    double imag_residual = 0.0;
};

InversionResult invert_centered(std::vector<Complex> F, int d, int n, double dxi) {
    const double scale = d == 1 ? dxi / (2.0 * kPi) : dxi * dxi / (4.0 * kPi * kPi);
    const int M = n / 2;
    if (d == 1) {
        for (int j = 0; j < n; ++j)
            if ((j & 1) != 0) F[static_cast<size_t>(j)] = -F[static_cast<size_t>(j)];
        fft_inplace(F, false);
        InversionResult out;
        out.values.resize(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) {
            Complex v = F[static_cast<size_t>(k)] * scale;
            if (((k + M) & 1) != 0) v = -v;
            out.values[static_cast<size_t>(k)] = v.real();
            out.imag_residual = std::max(out.imag_residual, std::abs(v.imag()));
        }
        return out;
    }
    for (int j1 = 0; j1 < n; ++j1)
        for (int j2 = 0; j2 < n; ++j2)
            if (((j1 + j2) & 1) != 0)
                F[static_cast<size_t>(j1) * n + j2] = -F[static_cast<size_t>(j1) * n + j2];
    fft2_inplace(F, n, n, false);
    InversionResult out;
    out.values.resize(static_cast<size_t>(n) * n);
    for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2) {
            Complex v = F[static_cast<size_t>(k1) * n + k2] * scale;
            if (((k1 + k2 + M + M) & 1) != 0) v = -v;
            out.values[static_cast<size_t>(k1) * n + k2] = v.real();
            out.imag_residual = std::max(out.imag_residual, std::abs(v.imag()));
        }
    return out;
}

// Tukey rolloff on the top 20% of frequencies (capped internal fields only).
double tukey_window(double absxi, double xi_max) {
    const double start = 0.8 * xi_max;
    if (absxi <= start) return 1.0;
    const double u = std::min(1.0, (absxi - start) / (0.2 * xi_max));
    return 0.5 * (1.0 + std::cos(kPi * u));
}

} // namespace

// ---------------------------------------------------------------------------
// Frozen field construction
// ---------------------------------------------------------------------------

double FrozenField::p(const Vec& w) const {
    if (!grid.contains(w)) return 0.0;  // certified by the crop threshold
    return cubic_interp(grid, value, w);
}

Vec FrozenField::gradp(const Vec& w) const {
    Vec g = zero_vec(d);
    if (!grid.contains(w)) return g;
    g[0] = cubic_interp(grid, grad[0], w);
    if (d == 2) g[1] = cubic_interp(grid, grad[1], w);
    return g;
}

double FrozenField::hess_quad(const Vec& w, const Vec& u) const {
    if (!grid.contains(w)) return 0.0;
    if (d == 1) return cubic_interp(grid, hess[0], w) * u[0] * u[0];
    const double hxx = cubic_interp(grid, hess[0], w);
    const double hxy = cubic_interp(grid, hess[1], w);
    const double hyy = cubic_interp(grid, hess[2], w);
    return hxx * u[0] * u[0] + 2.0 * hxy * u[0] * u[1] + hyy * u[1] * u[1];
}

double FrozenField::cdf_at(const Vec& w) const {
    if (d != 1 || cdf.empty()) throw Error("frozen field: cdf available only for d=1");
    if (w[0] <= grid.lo[0]) return 0.0;
    if (w[0] >= grid.hi[0]) return cdf.back();
    return cubic_interp(grid, cdf, w);
}

FrozenField build_frozen_field(const ModelSpec& model, const NumericalParams& params,
                               const Vec& z, double t, const CutExponentTable& table,
                               double sigma0, double xi_cap) {
    const double a = model.alpha_at(z);
    const double lam = model.lambda_at(z);
    const FrequencyGrid fg = choose_frequency_grid(model, params, t, a, sigma0, xi_cap);
    const int n = fg.n;
    const int M = n / 2;
    const int d = model.d;

    // Base (unrotated) atoms: rotation equivalence is handled by FrozenHandle.
    const SphericalMeasure& sig = model.sigma;

    const long nfreq = d == 1 ? n : static_cast<long>(n) * n;
    std::vector<Complex> F(static_cast<size_t>(nfreq));
    double cf_edge = 0.0;
    for (long j = 0; j < nfreq; ++j) {
        Vec xi = zero_vec(d);
        if (d == 1) {
            xi[0] = (static_cast<double>(j) - M) * fg.dxi;
        } else {
            xi[0] = (static_cast<double>(j / n) - M) * fg.dxi;
            xi[1] = (static_cast<double>(j % n) - M) * fg.dxi;
        }
        Complex E{0.0, 0.0};
        for (size_t i = 0; i < sig.size(); ++i)
            E += sig.weights[i] * table.eval(xi.dot(sig.dirs[i]), a);
        E *= lam;
        Complex val = std::exp(-E);
        if (fg.capped) {
            const double r = d == 1 ? std::abs(xi[0]) : xi.norm();
            val *= tukey_window(r, fg.xi_max());
        }
        F[static_cast<size_t>(j)] = val;
        const bool edge = d == 1 ? std::abs(static_cast<double>(j) - M) >= M - 1
                                 : (std::abs(static_cast<double>(j / n) - M) >= M - 1 ||
                                    std::abs(static_cast<double>(j % n) - M) >= M - 1);
        if (edge) cf_edge = std::max(cf_edge, std::abs(val));
    }

    FrozenField field;
    field.d = d;
    field.t = t;
    field.alpha = a;
    field.lambda = lam;
    field.truncation_warning = fg.capped || !fg.nyquist_ok;
    field.cf_edge = cf_edge;

    const Grid full = fg.dual();

    // value
    auto inv = invert_centered(F, d, n, fg.dxi);
    field.imag_residual = inv.imag_residual;

    // gradient and Hessian by spectral multipliers
    std::vector<Complex> tmp(F.size());
    auto multiply_and_invert = [&](auto&& mult) {
        for (long j = 0; j < nfreq; ++j) {
            Vec xi = zero_vec(d);
            if (d == 1) {
                xi[0] = (static_cast<double>(j) - M) * fg.dxi;
            } else {
                xi[0] = (static_cast<double>(j / n) - M) * fg.dxi;
                xi[1] = (static_cast<double>(j % n) - M) * fg.dxi;
            }
            tmp[static_cast<size_t>(j)] = F[static_cast<size_t>(j)] * mult(xi);
        }
        return invert_centered(tmp, d, n, fg.dxi);
    };

    auto gx = multiply_and_invert([](const Vec& xi) { return Complex(0.0, -xi[0]); });
    InversionResult gy;
    if (d == 2) gy = multiply_and_invert([](const Vec& xi) { return Complex(0.0, -xi[1]); });
    auto hxx = multiply_and_invert([](const Vec& xi) { return Complex(-xi[0] * xi[0], 0.0); });
    InversionResult hxy, hyy;
    if (d == 2) {
        hxy = multiply_and_invert([](const Vec& xi) { return Complex(-xi[0] * xi[1], 0.0); });
        hyy = multiply_and_invert([](const Vec& xi) { return Complex(-xi[1] * xi[1], 0.0); });
    }

    // Mass on the full dual grid (plain sum; the integrand vanishes at the ends).
    double mass = 0.0;
    for (double v : inv.values) mass += v;
    mass *= full.cell_volume();
    field.mass = mass;
    field.sup_value = *std::max_element(inv.values.begin(), inv.values.end());

    // Crop to the numerically supported window.  The threshold sits above the
    // inversion noise floor (estimated from the outermost ring), so values
    // outside the window are below the field's numerical resolution.
    double floor_noise = 0.0;
    {
        const int ring = std::max(2, n / 64);
        if (d == 1) {
            for (int k = 0; k < ring; ++k) {
                floor_noise = std::max(floor_noise, std::abs(inv.values[static_cast<size_t>(k)]));
                floor_noise = std::max(floor_noise,
                                       std::abs(inv.values[static_cast<size_t>(n - 1 - k)]));
            }
        } else {
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < ring; ++k) {
                    floor_noise = std::max(
                        floor_noise, std::abs(inv.values[static_cast<size_t>(i) * n + k]));
                    floor_noise = std::max(
                        floor_noise,
                        std::abs(inv.values[static_cast<size_t>(i) * n + (n - 1 - k)]));
                }
        }
    }
    const double thr =
        std::max(2.0 * floor_noise, 1e-16 * std::max(field.sup_value, 1e-300));
    int lo0 = 0, hi0 = n - 1, lo1 = 0, hi1 = d == 2 ? n - 1 : 0;
    if (d == 1) {
        while (lo0 < n - 1 && std::abs(inv.values[static_cast<size_t>(lo0)]) < thr) ++lo0;
        while (hi0 > lo0 && std::abs(inv.values[static_cast<size_t>(hi0)]) < thr) --hi0;
        lo0 = std::max(0, lo0 - 4);
        hi0 = std::min(n - 1, hi0 + 4);
        field.grid = Grid::line(full.lo[0] + lo0 * full.h(0), full.lo[0] + hi0 * full.h(0),
                                hi0 - lo0 + 1);
        const size_t m = static_cast<size_t>(hi0 - lo0 + 1);
        auto crop1 = [&](const std::vector<double>& src) {
            std::vector<double> dst(m);
            for (size_t k = 0; k < m; ++k) dst[k] = src[static_cast<size_t>(lo0) + k];
            return dst;
        };
        field.value = crop1(inv.values);
        field.grad[0] = crop1(gx.values);
        field.hess[0] = crop1(hxx.values);
        // cumulative trapezoid for cell-averaged evaluations
        field.cdf.resize(field.value.size());
        double run = 0.0;
        const double hh = field.grid.h(0);
        for (size_t k = 0; k < field.value.size(); ++k) {
            if (k > 0) run += 0.5 * hh * (field.value[k] + field.value[k - 1]);
            field.cdf[k] = run;
        }
    } else {
        auto rowmax = [&](int i) {
            double mx = 0.0;
            for (int j2 = 0; j2 < n; ++j2)
                mx = std::max(mx, std::abs(inv.values[static_cast<size_t>(i) * n + j2]));
            return mx;
        };
        auto colmax = [&](int j2) {
            double mx = 0.0;
            for (int i = 0; i < n; ++i)
                mx = std::max(mx, std::abs(inv.values[static_cast<size_t>(i) * n + j2]));
            return mx;
        };
        while (lo0 < n - 1 && rowmax(lo0) < thr) ++lo0;
        while (hi0 > lo0 && rowmax(hi0) < thr) --hi0;
        while (lo1 < n - 1 && colmax(lo1) < thr) ++lo1;
        while (hi1 > lo1 && colmax(hi1) < thr) --hi1;
        lo0 = std::max(0, lo0 - 4);
        hi0 = std::min(n - 1, hi0 + 4);
        lo1 = std::max(0, lo1 - 4);
        hi1 = std::min(n - 1, hi1 + 4);
        Grid g;
        g.d = 2;
        g.lo = {full.lo[0] + lo0 * full.h(0), full.lo[1] + lo1 * full.h(1)};
        g.hi = {full.lo[0] + hi0 * full.h(0), full.lo[1] + hi1 * full.h(1)};
        g.n = {hi0 - lo0 + 1, hi1 - lo1 + 1};
        field.grid = g;
        auto crop2 = [&](const std::vector<double>& src) {
            std::vector<double> dst(static_cast<size_t>(g.n[0]) * g.n[1]);
            for (int i = 0; i < g.n[0]; ++i)
                for (int j2 = 0; j2 < g.n[1]; ++j2)
                    dst[static_cast<size_t>(i) * g.n[1] + j2] =
                        src[static_cast<size_t>(i + lo0) * n + (j2 + lo1)];
            return dst;
        };
        field.value = crop2(inv.values);
        field.grad[0] = crop2(gx.values);
        field.grad[1] = crop2(gy.values);
        field.hess[0] = crop2(hxx.values);
        field.hess[1] = crop2(hxy.values);
        field.hess[2] = crop2(hyy.values);
    }
    return field;
}

DensityField frozen_density(const ModelSpec& model, const NumericalParams& params,
                            const Vec& z, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw Error("frozen_density: t must lie in (0,1]");
    const double sigma0 = fitted_sigma0(model, z);
    const double a = model.alpha_at(z);
    NumericalParams p2 = params;
    for (int attempt = 0;; ++attempt) {
        FrequencyGrid fg = choose_frequency_grid(model, p2, t, a, sigma0, 0.0);
        const double s_max = (model.d == 1 ? 1.0 : std::sqrt(2.0)) * fg.xi_max();
        CutExponentTable table(t, p2.s_frak, s_max, a, a);
        FrozenField f = build_frozen_field(model, p2, z, t, table, sigma0, 0.0);
        if (f.cf_edge > 1e-6) {
            if (attempt == 0) {
                p2.freq_n = 2 * p2.freq_nodes(model.d);
                continue;
            }
            throw NumericalError(
                "frozen_density: characteristic-function tail mass exceeds 1e-6 after one "
                "grid doubling",
                f.cf_edge);
        }
        DensityField out;
        out.grid = f.grid;
        out.values = f.value;
        out.t = t;
        out.provenance = "p^{z,cut} z=(" + std::to_string(z[0]) +
                         (model.d == 2 ? "," + std::to_string(z[1]) : "") +
                         ") t=" + std::to_string(t) + " cut-exponent";
        out.truncation_warning = f.truncation_warning;
        out.cf_edge_mass = f.cf_edge;
        return out;
    }
}

// ---------------------------------------------------------------------------
// Stable densities
// ---------------------------------------------------------------------------

namespace {

// Full stable exponent with drift on a frequency grid -> field on dual grid.
DensityField invert_stable(const ModelSpec& model, const Vec& z, double t, int n,
                           double sigma0) {
    const double a = model.alpha_at(z);
    const int d = model.d;
    const double xi = std::pow(kLog10Target / std::max(sigma0 * t, 1e-300), 1.0 / a);
    const double dxi = 2.0 * xi / n;
    const int M = n / 2;
    const SphericalMeasure sig = model.sigma_at(z);
    const double lam = model.lambda_at(z);
    const Vec ups = intrinsic_drift(model, z);

    // 1-D log-spaced table of the radial exponent factor I(s;alpha).
    const double s_max = (d == 1 ? 1.0 : std::sqrt(2.0)) * xi + 1.0;
    const int m = 2400;
    const double s_min = s_max * 1e-9;
    std::vector<Complex> tab(static_cast<size_t>(m));
    const double lr = std::log(s_max / s_min) / (m - 1);
    parallel_for(m, [&](long k) {
        tab[static_cast<size_t>(k)] =
            stable_radial_integral(s_min * std::exp(lr * static_cast<double>(k)), a);
    });
    auto radial = [&](double s) -> Complex {
        const bool neg = s < 0.0;
        s = std::abs(s);
        Complex v;
        if (s <= s_min) {
            // below the table: I ~ I(s_min) (s/s_min)^alpha-ish; it is already
            // negligible, linear blend to zero is enough
            v = tab[0] * (s / s_min);
        } else {
            const double u = std::log(s / s_min) / lr;
            const long i0 = std::max(0L, std::min(static_cast<long>(m) - 2,
                                                  static_cast<long>(u)));
            const double f = u - static_cast<double>(i0);
            const long im = std::max(0L, i0 - 1), ip = std::min<long>(m - 1, i0 + 1),
                       ipp = std::min<long>(m - 1, i0 + 2);
            const double f2 = f * f, f3 = f2 * f;
            const double w0 = 0.5 * (-f3 + 2.0 * f2 - f), w1 = 0.5 * (3.0 * f3 - 5.0 * f2 + 2.0),
                         w2 = 0.5 * (-3.0 * f3 + 4.0 * f2 + f), w3 = 0.5 * (f3 - f2);
            v = w0 * tab[static_cast<size_t>(im)] + w1 * tab[static_cast<size_t>(i0)] +
                w2 * tab[static_cast<size_t>(ip)] + w3 * tab[static_cast<size_t>(ipp)];
        }
        return neg ? std::conj(v) : v;
    };

    const long nfreq = d == 1 ? n : static_cast<long>(n) * n;
    std::vector<Complex> F(static_cast<size_t>(nfreq));
    parallel_for(nfreq, [&](long j) {
        Vec xiv = zero_vec(d);
        if (d == 1) {
            xiv[0] = (static_cast<double>(j) - M) * dxi;
        } else {
            xiv[0] = (static_cast<double>(j / n) - M) * dxi;
            xiv[1] = (static_cast<double>(j % n) - M) * dxi;
        }
        Complex psi{0.0, 0.0};
        for (size_t i = 0; i < sig.size(); ++i)
            psi += sig.weights[i] * radial(xiv.dot(sig.dirs[i]));
        psi *= lam;
        psi -= Complex(0.0, xiv.dot(ups));
        F[static_cast<size_t>(j)] = std::exp(-t * psi);
    });
    double cf_edge = 0.0;
    for (long j = 0; j < nfreq; ++j) {
        const bool edge = d == 1 ? (j <= 1 || j >= nfreq - 2)
                                 : ((j / n) <= 1 || (j / n) >= n - 2 || (j % n) <= 1 ||
                                    (j % n) >= n - 2);
        if (edge) cf_edge = std::max(cf_edge, std::abs(F[static_cast<size_t>(j)]));
    }

    auto inv = invert_centered(std::move(F), d, n, dxi);
    FrequencyGrid fg;
    fg.d = d;
    fg.n = n;
    fg.dxi = dxi;
    DensityField out;
    out.grid = fg.dual();
    out.values = std::move(inv.values);
    out.t = t;
    out.cf_edge_mass = cf_edge;
    out.truncation_warning = cf_edge > 1e-10;
    out.provenance = "g^z full stable exponent with intrinsic drift";
    return out;
}

} // namespace

StableDensityPair stable_density(const ModelSpec& model, const Vec& z, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw Error("stable_density: t must lie in (0,1]");
    const double sigma0 = fitted_sigma0(model, z);
    NumericalParams params;  // only freq_nodes is used
    const int n = params.freq_nodes(model.d);
    DensityField direct = invert_stable(model, z, t, n, sigma0);

    // Scaled shape: t^{-d/a} g^z(x / t^{1/a}) where g^z is the time-1 density.
    DensityField shape = invert_stable(model, z, 1.0, n, sigma0);
    const double a = model.alpha_at(z);
    DensityField scaled;
    scaled.grid = direct.grid;
    scaled.t = t;
    scaled.provenance = "t^{-d/a} g^z(./t^{1/a}) scaled stable shape";
    scaled.values.resize(direct.values.size());
    const double ts = std::pow(t, -1.0 / a);
    const double amp = std::pow(t, -static_cast<double>(model.d) / a);
    for (long i = 0; i < scaled.grid.size(); ++i) {
        Vec w = scaled.grid.node(i);
        w *= ts;
        scaled.values[static_cast<size_t>(i)] = amp * shape.interpolate(w);
    }
    return {std::move(direct), std::move(scaled)};
}

// ---------------------------------------------------------------------------
// Stable shape cache (for residuals)
// ---------------------------------------------------------------------------

struct StableShapeCache::Entry {
    DensityField shape;   // time-1 inversion of e^{-psi^{z,upsilon}}
    double alpha = 0.0;
    double tail_coef_lo = 0.0, tail_coef_hi = 0.0;  // fitted C in C |w|^{-1-a} per side (d=1)
    double tail_coef = 0.0;                         // radial fit (d=2)
};

StableShapeCache::StableShapeCache(const ModelSpec& model) : model_(model) {}

StableShapeCache::~StableShapeCache() = default;

namespace {
long long quantize_sig(double a, double b) {
    const long long qa = llround(a * 1e10);
    const long long qb = llround(b * 1e10);
    return qa * 2654435761LL + qb;
}
} // namespace

const StableShapeCache::Entry& StableShapeCache::entry_for(const Vec& z) {
    const double a = model_.alpha_at(z);
    const double lam = model_.lambda_at(z);
    const long long key = quantize_sig(a, lam);
    {
        std::shared_lock lk(mu_);
        auto it = map_.find(key);
        if (it != map_.end()) return *it->second;
    }
    auto e = std::make_unique<Entry>();
    e->alpha = a;
    const double sigma0 = fitted_sigma0(model_, z);
    e->shape = invert_stable(model_, z, 1.0, NumericalParams{}.freq_nodes(model_.d), sigma0);
    // Algebraic tail fit on the outer 5% ring: g ~ C |w|^{-d-a}.
    const Grid& g = e->shape.grid;
    if (model_.d == 1) {
        const int n = g.n[0];
        const int k = std::max(4, n / 40);
        double lo = 0.0, hi = 0.0;
        for (int i = 0; i < k; ++i) {
            const Vec wl = g.node(i), wr = g.node(n - 1 - i);
            lo = std::max(lo, e->shape.values[static_cast<size_t>(i)] *
                                  std::pow(std::abs(wl[0]), 1.0 + a));
            hi = std::max(hi, e->shape.values[static_cast<size_t>(n - 1 - i)] *
                                  std::pow(std::abs(wr[0]), 1.0 + a));
        }
        e->tail_coef_lo = lo;
        e->tail_coef_hi = hi;
    } else {
        double c = 0.0;
        const int n = g.n[0];
        for (int i = 0; i < n; ++i) {
            for (int j : {0, n - 1}) {
                const Vec w = g.node(g.index(i, j));
                c = std::max(c, e->shape.values[static_cast<size_t>(g.index(i, j))] *
                                    std::pow(w.norm(), 2.0 + a));
            }
        }
        e->tail_coef = c;
    }
    std::unique_lock lk(mu_);
    auto [it, inserted] = map_.emplace(key, std::move(e));
    return *it->second;
}

double StableShapeCache::scaled(const Vec& z, double t, const Vec& w) {
    const Entry& e = entry_for(z);
    const double a = e.alpha;
    Vec u = w;
    u *= std::pow(t, -1.0 / a);
    const double amp = std::pow(t, -static_cast<double>(model_.d) / a);
    if (e.shape.grid.contains(u)) return amp * e.shape.interpolate(u);
    // Algebraic tail extension.
    if (model_.d == 1) {
        const double c = u[0] < 0.0 ? e.tail_coef_lo : e.tail_coef_hi;
        return amp * c * std::pow(std::abs(u[0]), -1.0 - a);
    }
    return amp * e.tail_coef * std::pow(u.norm(), -2.0 - a);
}

double StableShapeCache::shape_mass(const Vec& z) { return entry_for(z).shape.mass(); }

// ---------------------------------------------------------------------------
// Frozen cache and zero-order evaluation
// ---------------------------------------------------------------------------

FrozenCache::FrozenCache(const ModelSpec& model, const NumericalParams& params, double xi_cap,
                         double dual_extent)
    : model_(model), params_(params), xi_cap_(xi_cap) {
    if (dual_extent > 0.0 && xi_cap > 0.0) {
        // dual spacing pi/Xi, extent = n/2 * pi/Xi  =>  n >= 2 Xi extent / pi
        int n = 1;
        const double need = 2.0 * xi_cap * dual_extent / 3.14159265358979323846;
        while (n < need) n <<= 1;
        params_.freq_n = std::max(n, params_.freq_nodes(model.d));
    }
}

namespace {
long long field_key(double alpha, double lambda, double t) {
    const long long qa = llround(alpha * 1e12);
    const long long ql = llround(lambda * 1e12);
    const long long qt = llround(t * 1e14);
    long long h = 1469598103934665603LL;
    for (long long v : {qa, ql, qt}) {
        h ^= v;
        h *= 1099511628211LL;
    }
    return h;
}
} // namespace

const CutExponentTable& FrozenCache::table_for(double t) {
    const long long key = llround(t * 1e14);
    {
        std::shared_lock lk(mu_);
        auto it = tables_.find(key);
        if (it != tables_.end()) return *it->second;
    }
    // Upper bound for |xi.l| over any frequency grid this cache can request.
    const double sigma0_min = 1e-2;  // conservative; capped grids dominate in practice
    double xi = std::pow(kLog10Target / std::max(sigma0_min * t, 1e-300), 1.0 / model_.alpha_max);
    if (xi_cap_ > 0.0) xi = std::min(xi, xi_cap_);
    const double s_max = (model_.d == 1 ? 1.0 : std::sqrt(2.0)) * xi + 1.0;
    auto tab = std::make_unique<CutExponentTable>(t, params_.s_frak, s_max, model_.alpha_min,
                                                  model_.alpha_max);
    std::unique_lock lk(mu_);
    auto [it, inserted] = tables_.emplace(key, std::move(tab));
    return *it->second;
}

FrozenHandle FrozenCache::at(const Vec& z, double t) {
    const double a = model_.alpha_at(z);
    const double lam = model_.lambda_at(z);
    const long long key = field_key(a, lam, t);
    FrozenHandle h;
    h.rotated = model_.sigma.rotation.active();
    if (h.rotated) h.rot = model_.sigma.rotation.at(z);
    {
        std::shared_lock lk(mu_);
        auto it = fields_.find(key);
        if (it != fields_.end()) {
            h.f = it->second.get();
            return h;
        }
    }
    const CutExponentTable& tab = table_for(t);
    long long skey = field_key(a, lam, -1.0);
    double sigma0;
    {
        std::shared_lock lk(mu_);
        auto it = sigma0_.find(skey);
        sigma0 = it != sigma0_.end() ? it->second : -1.0;
    }
    if (sigma0 < 0.0) {
        sigma0 = fitted_sigma0(model_, z);
        std::unique_lock lk(mu_);
        sigma0_.emplace(skey, sigma0);
    }
    auto f = std::make_unique<FrozenField>(
        build_frozen_field(model_, params_, z, t, tab, sigma0, xi_cap_));
    std::unique_lock lk(mu_);
    auto [it, inserted] = fields_.emplace(key, std::move(f));
    h.f = it->second.get();
    return h;
}

void FrozenCache::prebuild(const std::vector<Vec>& zs, const std::vector<double>& ts) {
    // Collect distinct keys first, then build them in parallel in key order.
    std::vector<std::pair<Vec, double>> jobs;
    std::vector<long long> seen;
    for (double t : ts) {
        table_for(t);  // serial: tables are shared across fields
        for (const Vec& z : zs) {
            const long long key = field_key(model_.alpha_at(z), model_.lambda_at(z), t);
            if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
                seen.push_back(key);
                jobs.emplace_back(z, t);
            }
        }
    }
    parallel_for(static_cast<long>(jobs.size()), [&](long i) {
        at(jobs[static_cast<size_t>(i)].first, jobs[static_cast<size_t>(i)].second);
    });
}

double zero_order(const ModelSpec& model, const NumericalParams& params, const Vec& x,
                  const Vec& y, double t, FrozenCache& cache) {
    const Vec kappa = solve_flow(model, params, y, t, FlowDirection::Backward).terminal();
    const FrozenHandle h = cache.at(y, t);
    return h.p(kappa - x);
}

// ---------------------------------------------------------------------------
// Bounding kernels
// ---------------------------------------------------------------------------

double bound_f(double t, double a, double c, const Vec& x) {
    return std::pow(t, -a * x.d) * std::exp(-c * x.norm() * std::pow(t, -a));
}

double bound_K0(const NumericalParams& params, double t, double alpha_y,
                const Vec& kappa_y_minus_x) {
    return bound_f(t, params.zeta(alpha_y), params.c_decay, kappa_y_minus_x);
}

double bound_K1(const NumericalParams& params, const ModelSpec& model, double t,
                double alpha_x, const Vec& y_minus_chi) {
    const double r = y_minus_chi.norm();
    if (r <= std::pow(t, params.delta_K1))
        return bound_f(t, params.zeta(alpha_x), params.c_decay, y_minus_chi);
    return std::pow(t, -static_cast<double>(params.N_K1)) *
           bound_f(t, params.zeta_min(model), params.c_decay, y_minus_chi);
}

} // namespace stablekit
