#include <doctest.h>

#include <cmath>
#include <random>

#include "stablekit/flow.hpp"
#include "stablekit/frozen.hpp"
#include "stablekit/montecarlo.hpp"
#include "stablekit/quadrature.hpp"
#include "stablekit/registry.hpp"

using namespace stablekit;

namespace {
const double kPi = 3.14159265358979323846;

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(xs.size());
    for (int i = 0; i < n; ++i) {
        const double lx = std::log(xs[static_cast<size_t>(i)]);
        const double ly = std::log(ys[static_cast<size_t>(i)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}
} // namespace

TEST_CASE("integrated cut exponent vanishes at xi = 0 and is conjugate symmetric") {
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams p = NumericalParams::recommended(m);
    CHECK(std::abs(integrated_cut_exponent(m, p, Vec(0.3), 0.5, Vec(0.0))) < 1e-14);
    for (double xi : {0.8, 5.0}) {
        const Complex a = integrated_cut_exponent(m, p, Vec(0.3), 0.5, Vec(xi));
        const Complex b = integrated_cut_exponent(m, p, Vec(0.3), 0.5, Vec(-xi));
        CHECK(b.real() == doctest::Approx(a.real()).epsilon(1e-10));
        CHECK(b.imag() == doctest::Approx(-a.imag()).epsilon(1e-10));
    }
}

TEST_CASE("cut exponent cross-check: removed tail equals independent quadrature") {
    // t Re psi(xi) - Re int_0^t psi^cut dr = int_0^t int_{|u|>r^zeta} (1-cos(xi u)) mu(du) dr
    ModelSpec m = get_model("const-cauchy");
    NumericalParams p = NumericalParams::recommended(m);
    const double t = 1.0, xi = 1.0;
    auto [psi, psid] = stable_exponent(m, Vec(0.0), Vec(xi));
    (void)psid;
    const Complex E = integrated_cut_exponent(m, p, Vec(0.0), t, Vec(xi));
    const double zeta = p.zeta(1.0);
    // independent route: 2-d quadrature in (r, rho); lambda = 2/pi, symmetric pair
    const double lam = 2.0 / kPi;
    const double tail = adaptive_quad(
        [&](double r) {
            const double lo = std::pow(std::max(r, 1e-300), zeta);
            return lam * adaptive_quad(
                             [&](double rho) {
                                 return (1.0 - std::cos(xi * rho)) * std::pow(rho, -2.0);
                             },
                             lo, lo * 4096.0, 1e-11) +
                   lam * std::pow(lo * 4096.0, -1.0);  // averaged cos tail beyond
        },
        0.0, t, 1e-9);
    CHECK(t * psi.real() - E.real() == doctest::Approx(tail).epsilon(1e-5));
}

TEST_CASE("cut exponent table matches the scalar route") {
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams p = NumericalParams::recommended(m);
    const double t = 0.37;
    CutExponentTable tab(t, p.s_frak, 60.0, m.alpha_min, m.alpha_max);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> us(-55.0, 55.0), ua(m.alpha_min, m.alpha_max);
    for (int i = 0; i < 24; ++i) {
        const double s = us(rng), a = ua(rng);
        const Complex direct = cut_exponent_radial(s, a, t, p.s_frak, 2);
        const Complex table = tab.eval(s, a);
        CHECK(std::abs(direct - table) < 2e-7 * (1.0 + std::abs(direct)));
    }
}

TEST_CASE("frozen density: mass, symmetry, nonnegativity") {
    ModelSpec m = get_model("const-cauchy");
    NumericalParams p = NumericalParams::recommended(m);
    DensityField f = frozen_density(m, p, Vec(0.0), 0.5);
    CHECK_NOTHROW(f.check_invariants());
    CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-2));
    // symmetric sigma: even field
    for (double x : {0.2, 0.8, 1.7}) {
        CHECK(f.interpolate(Vec(x)) == doctest::Approx(f.interpolate(Vec(-x))).epsilon(1e-8));
    }
    CHECK(f.min_value() >= -1e-4 * f.max_value());
}

TEST_CASE("frozen density value vs finer independent quadrature at x = 0") {
    ModelSpec m = get_model("const-cauchy");
    NumericalParams p = NumericalParams::recommended(m);
    const double t = 1.0;
    DensityField f = frozen_density(m, p, Vec(0.0), t);
    // independent: direct Riemann sum of the inversion integral on a 10x finer grid
    const double Xi = 10.0 * 24.0 / t;  // generous extent; CF decays as e^{-t xi}
    const long N = 200000;
    const double dxi = 2.0 * Xi / N;
    double acc = 0.0;
    for (long j = 0; j < N; ++j) {
        const double xi = -Xi + (j + 0.5) * dxi;
        const Complex E = integrated_cut_exponent(m, p, Vec(0.0), t, Vec(xi));
        acc += std::exp(-E.real()) * std::cos(-E.imag());
    }
    acc *= dxi / (2.0 * kPi);
    CHECK(f.interpolate(Vec(0.0)) == doctest::Approx(acc).epsilon(1e-6));
}

TEST_CASE("stable density: Cauchy closed form and scaled-shape consistency") {
    ModelSpec m = get_model("const-cauchy");
    StableDensityPair pair = stable_density(m, Vec(0.0), 1.0);
    CHECK(pair.direct.interpolate(Vec(0.0)) == doctest::Approx(1.0 / kPi).epsilon(1e-4));
    for (double x : {0.5, 1.0, 3.0}) {
        const double cauchy = 1.0 / (kPi * (1.0 + x * x));
        CHECK(pair.direct.interpolate(Vec(x)) == doctest::Approx(cauchy).epsilon(1e-3));
        CHECK(pair.scaled_shape.interpolate(Vec(x)) == doctest::Approx(cauchy).epsilon(1e-3));
    }
    // at t = 0.5 the kernel is t/(pi (t^2 + x^2))
    StableDensityPair p2 = stable_density(m, Vec(0.0), 0.5);
    for (double x : {0.0, 0.7, 2.0}) {
        const double cauchy = 0.5 / (kPi * (0.25 + x * x));
        CHECK(p2.direct.interpolate(Vec(x)) == doctest::Approx(cauchy).epsilon(1e-3));
        CHECK(p2.scaled_shape.interpolate(Vec(x)) == doctest::Approx(cauchy).epsilon(1e-3));
    }
}

TEST_CASE("stable density tail ratio bounded for the rotationally symmetric builtin") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.3}});
    StableDensityPair pair = stable_density(m, Vec(0.0), 1.0);
    const double a = 1.3;
    double lo = 1e300, hi = 0.0;
    for (double w = 2.0; w <= 20.0; w += 0.5) {
        const double g = pair.direct.interpolate(Vec(w));
        const double ratio = g * std::pow(1.0 + w, 1.0 + a);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    CHECK(lo > 0.0);
    CHECK(hi / lo < 10.0);
}

TEST_CASE("zero order: trivial flow reduces to the frozen density") {
    ModelSpec m = get_model("const-cauchy");
    NumericalParams p = NumericalParams::recommended(m);
    FrozenCache cache(m, p);
    const double t = 0.3;
    DensityField f = frozen_density(m, p, Vec(0.0), t);
    for (double x : {-1.0, 0.0, 0.4}) {
        for (double y : {-0.5, 0.2, 1.0}) {
            const double p0 = zero_order(m, p, Vec(x), Vec(y), t, cache);
            CHECK(p0 == doctest::Approx(f.interpolate(Vec(y - x))).epsilon(1e-8));
        }
    }
}

TEST_CASE("zero order mass bound sup_x int p0 dy") {
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams p = NumericalParams::recommended(m);
    FrozenCache cache(m, p);
    for (double t : {0.05, 0.2, 1.0}) {
        for (double x : {-0.8, 0.0, 1.1}) {
            double acc = 0.0;
            const double hy = 0.02;
            for (double y = -20.0; y <= 20.0; y += hy)
                acc += hy * zero_order(m, p, Vec(x), Vec(y), t, cache);
            CHECK(acc < 1.6);
            CHECK(acc > 0.5);
        }
    }
}

TEST_CASE("zero order converges to the scaled stable shape in L1") {
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams p = NumericalParams::recommended(m);
    FrozenCache cache(m, p);
    StableShapeCache shapes(m);
    const Vec x0(0.2);
    std::vector<double> ts{0.04, 0.1, 0.25, 0.6}, l1;
    for (double t : ts) {
        const Vec chi = solve_flow(m, p, x0, t, FlowDirection::Forward).terminal();
        double acc = 0.0;
        const double hy = 0.02;
        for (double y = -16.0; y <= 16.0; y += hy) {
            const double a = zero_order(m, p, x0, Vec(y), t, cache);
            const double b = shapes.scaled(x0, t, Vec(y) - chi);
            acc += hy * std::abs(a - b);
        }
        l1.push_back(std::max(acc, 1e-12));
    }
    CHECK(loglog_slope(ts, l1) > 0.0);
}

TEST_CASE("frozen density sup bound is refinement stable") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.2}});
    NumericalParams p = NumericalParams::recommended(m);
    std::vector<double> ratios;
    for (int doubling = 0; doubling < 2; ++doubling) {
        NumericalParams q = p;
        q.freq_n = (doubling == 0 ? 4096 : 8192);
        double worst = 0.0;
        for (double t : {0.02, 0.1, 0.5, 1.0}) {
            DensityField f = frozen_density(m, q, Vec(0.0), t);
            worst = std::max(worst, f.max_value() * std::pow(t, 1.0 / 1.2));
        }
        ratios.push_back(worst);
    }
    CHECK(ratios[1] / ratios[0] < 2.0);
    CHECK(ratios[0] / ratios[1] < 2.0);
}

TEST_CASE("derivative bound: finite differences against the bounding kernel") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.2}});
    NumericalParams p = NumericalParams::recommended(m);
    const Vec z(0.0);
    const double a = 1.2;
    // fit (C, c') on half the samples, assert on the rest
    std::vector<std::pair<double, double>> samples;  // (t, x)
    for (double t : {0.05, 0.2, 0.8})
        for (double x : {0.0, 0.3, 0.9, 1.8})
            samples.push_back({t, x});
    double C = 0.0;
    const double cprime = 0.5 * p.c_decay;
    FrozenCache cache(m, p);
    auto grad_ratio = [&](double t, double x) {
        const FrozenHandle h = cache.at(z, t);
        const double dx = 1e-4;
        const double fd =
            (h.p(Vec(x + dx)) - h.p(Vec(x - dx))) / (2.0 * dx);
        const double bound = std::pow(t, -p.s_frak - 1.0 / a) *
                             bound_f(t, p.zeta(a), cprime, Vec(x));
        return std::abs(fd) / std::max(bound, 1e-300);
    };
    for (size_t i = 0; i < samples.size(); i += 2)
        C = std::max(C, grad_ratio(samples[i].first, samples[i].second));
    for (size_t i = 1; i < samples.size(); i += 2)
        CHECK(grad_ratio(samples[i].first, samples[i].second) <= 2.0 * C + 1e-9);
}

TEST_CASE("bounding kernels: closed-form spot values") {
    NumericalParams p;
    p.c_decay = 0.7;
    Vec x(0.0);
    CHECK(bound_f(0.5, 0.8, 0.7, x) == doctest::Approx(std::pow(0.5, -0.8)));
    Vec y(2.0);
    CHECK(bound_f(1.0, 0.8, 0.7, y) == doctest::Approx(std::exp(-0.7 * 2.0)));
}

TEST_CASE("K1 kernel y-integrals are finite with a fitted constant") {
    // The constant in the appendix bound is existential and grows rapidly with
    // the power N at desk-scale times; fit it and check structure instead.
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams p = NumericalParams::recommended(m);
    double fitted_C = 0.0;
    for (double t : {0.05, 0.1, 0.5, 1.0}) {
        for (double x : {0.0, 0.8}) {
            const double ax = m.alpha_at(Vec(x));
            double acc = 0.0, acc_near = 0.0;
            const double hy = 0.01;
            for (double y = -30.0; y <= 30.0; y += hy) {
                // driftless symmetric model: chi_t(x) = x
                const double v = bound_K1(p, m, t, ax, Vec(y - x));
                acc += hy * v;
                if (std::abs(y - x) <= std::pow(t, p.delta_K1)) acc_near += hy * v;
            }
            CHECK(std::isfinite(acc));
            fitted_C = std::max(fitted_C, acc);
            // the near-diagonal piece carries the uniform bound 2/c
            CHECK(acc_near <= 2.2 * 2.0 / p.c_decay);
        }
    }
    CHECK(fitted_C > 0.0);
    // increasing the decay constant shrinks every integral
    NumericalParams p2 = p;
    p2.c_decay = 2.0 * p.c_decay;
    for (double t : {0.05, 0.5}) {
        double a1 = 0.0, a2 = 0.0;
        for (double y = -30.0; y <= 30.0; y += 0.01) {
            a1 += 0.01 * bound_K1(p, m, t, m.alpha_at(Vec(0.0)), Vec(y));
            a2 += 0.01 * bound_K1(p2, m, t, m.alpha_at(Vec(0.0)), Vec(y));
        }
        CHECK(a2 < a1);
    }
}

TEST_CASE("tail reattachment identity via Monte Carlo convolution") {
    // constant coefficients: t^{-1/a} g(w t^{-1/a}) equals p^cut convolved with
    // the compound Poisson law of the reattached tail jumps.
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.2}});
    NumericalParams p = NumericalParams::recommended(m);
    const double t = 0.5, a = 1.2;
    const double zeta = p.zeta(a);
    DensityField cut = frozen_density(m, p, Vec(0.0), t);
    StableShapeCache shapes(m);

    // intensity measure Lambda(A) = int_0^t mu(A cap {|u| > s^zeta}) ds, polar
    // radial density per ray: lam w_i rho^{-1-a} min(t, rho^{1/zeta})
    const double lam = m.lambda_at(Vec(0.0));
    auto band_mass = [&](double lo, double hi) {
        return adaptive_quad(
            [&](double rho) {
                return lam * std::pow(rho, -1.0 - a) * std::min(t, std::pow(rho, 1.0 / zeta));
            },
            lo, hi, 1e-12);
    };
    const double R = 400.0;
    const double Lambda_total = band_mass(1e-6, R) + lam * std::min(t, 1.0) *
                                                         std::pow(R, -a) / a;
    // sample jumps: K ~ Poisson(Lambda_total), radius by inverse CDF (tabulated),
    // direction +-1 with probability 1/2
    std::vector<double> grid_rho, cdf;
    double acc = 0.0;
    for (double rho = 1e-6; rho < R; rho *= 1.05) {
        grid_rho.push_back(rho);
        cdf.push_back(acc);
        acc += band_mass(rho, rho * 1.05);
    }
    grid_rho.push_back(R);
    cdf.push_back(acc);
    RngStream rng(2024, 0);
    const long nmc = 40000;
    std::vector<double> w_eval{0.0, 0.5, 1.2, 2.5};
    std::vector<double> mc_mean(w_eval.size(), 0.0), mc_var(w_eval.size(), 0.0);
    for (long i = 0; i < nmc; ++i) {
        // Poisson count
        int k = 0;
        double e = rng.exponential();
        while (e < Lambda_total) {
            ++k;
            e += rng.exponential();
        }
        double J = 0.0;
        for (int j = 0; j < k; ++j) {
            const double u = rng.uniform() * Lambda_total;
            size_t lo = 0, hi = cdf.size() - 1;
            while (lo + 1 < hi) {
                const size_t mid = (lo + hi) / 2;
                if (cdf[mid] <= u)
                    lo = mid;
                else
                    hi = mid;
            }
            const double rho = grid_rho[lo];
            J += (rng.uniform() < 0.5 ? 1.0 : -1.0) * rho;
        }
        for (size_t wi = 0; wi < w_eval.size(); ++wi) {
            const double v = cut.interpolate(Vec(w_eval[wi] - J));
            mc_mean[wi] += v;
            mc_var[wi] += v * v;
        }
    }
    for (size_t wi = 0; wi < w_eval.size(); ++wi) {
        mc_mean[wi] /= static_cast<double>(nmc);
        mc_var[wi] = (mc_var[wi] / static_cast<double>(nmc) - mc_mean[wi] * mc_mean[wi]) /
                     static_cast<double>(nmc);
        const double target = shapes.scaled(Vec(0.0), t, Vec(w_eval[wi]));
        const double sigma = std::sqrt(std::max(mc_var[wi], 1e-300));
        CHECK(std::abs(mc_mean[wi] - target) <= 3.0 * sigma + 2e-3 * target + 1e-4);
    }
}

TEST_CASE("frozen cache shares rotation-equivalent fields") {
    ModelSpec m = get_model("rotation-sde");
    NumericalParams p = NumericalParams::recommended(m);
    p.freq_n = 256;  // keep the 2-d inversion cheap
    FrozenCache cache(m, p);
    const double t = 0.4;
    const FrozenHandle h1 = cache.at(Vec(3.0, 0.0), t);
    const FrozenHandle h2 = cache.at(Vec(0.0, 3.0), t);
    CHECK(cache.size() == 1);  // same signature, rotated view
    CHECK(h1.f == h2.f);
    // rotated evaluation: the field at (3,0) looks along e1 like the field at
    // (0,3) looks along e2
    const double v1 = h1.p(Vec(0.3, 0.1));
    const double v2 = h2.p(Vec(-0.1, 0.3));
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-9));
}
