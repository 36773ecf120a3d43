#include <doctest.h>

#include <cmath>

#include "stablekit/model.hpp"
#include "stablekit/quadrature.hpp"
#include "stablekit/registry.hpp"
#include "stablekit/validate.hpp"

using namespace stablekit;

namespace {
const double kPi = 3.14159265358979323846;

// Independent oracle for Re I(s; alpha): trapezoid in log(rho) with a Taylor
// head and an averaged tail.  Deliberately a different integration route from
// the implementation.
double re_exponent_oracle(double s, double a) {
    const double eps = 1e-8;
    double acc = 0.5 * s * s * std::pow(eps, 2.0 - a) / (2.0 - a);
    const double R = 4000.0 / std::max(s, 0.5);
    const int N = 2000000;
    const double ulo = std::log(eps), uhi = std::log(R);
    const double h = (uhi - ulo) / N;
    for (int k = 0; k <= N; ++k) {
        const double rho = std::exp(ulo + k * h);
        const double f = (1.0 - std::cos(rho * s)) * std::pow(rho, -a);  // extra rho from drho
        acc += (k == 0 || k == N ? 0.5 : 1.0) * f * h;
    }
    acc += std::pow(R, -a) / a;  // (1-cos) averages to 1 far out
    return acc;
}

} // namespace

TEST_CASE("stable exponent: const-cauchy gives psi(1) = 1") {
    ModelSpec m = get_model("const-cauchy");
    auto [psi, psid] = stable_exponent(m, Vec(0.0), Vec(1.0));
    CHECK(psi.real() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(psi.imag()) < 1e-12);
    CHECK(psid.real() == doctest::Approx(psi.real()));
}

TEST_CASE("stable exponent vanishes at xi = 0") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 0.7}});
    auto [psi, psid] = stable_exponent(m, Vec(0.3), Vec(0.0));
    CHECK(std::abs(psi) < 1e-14);
    CHECK(std::abs(psid) < 1e-14);
}

TEST_CASE("stable exponent: totally skewed alpha=0.5 closed form") {
    ModelSpec m;
    m.d = 1;
    m.alpha = constant_expr(0.5);
    m.lambda = constant_expr(1.0);
    m.sigma = single_atom_1d(1.0);
    m.alpha_min = m.alpha_max = 0.5;
    m.lambda_min = m.lambda_max = 1.0;
    auto [psi, psid] = stable_exponent(m, Vec(0.0), Vec(1.0));
    const double closed =
        std::tgamma(1.5) * std::cos(kPi * 0.25) / (0.5 * 0.5);  // ~2.5066
    CHECK(psi.real() == doctest::Approx(closed).epsilon(1e-4));
    CHECK(psi.real() == doctest::Approx(2.5066).epsilon(1e-3));
    (void)psid;
}

TEST_CASE("stable exponent against an independent quadrature oracle") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.3}, {"lambda", 1.0}});
    for (double s : {0.7, 2.1}) {
        auto [psi, psid] = stable_exponent(m, Vec(0.0), Vec(s));
        (void)psid;
        const double oracle = re_exponent_oracle(s, 1.3);  // symmetric pair: Re = I
        CHECK(psi.real() == doctest::Approx(oracle).epsilon(1e-5));
    }
}

TEST_CASE("conjugate symmetry of the exponent") {
    ModelSpec m = get_model("var-alpha-1d");
    for (double xi : {0.3, 1.7, 12.0}) {
        auto [pp, ppd] = stable_exponent(m, Vec(0.4), Vec(xi));
        auto [pm, pmd] = stable_exponent(m, Vec(0.4), Vec(-xi));
        CHECK(pm.real() == doctest::Approx(pp.real()).epsilon(1e-12));
        CHECK(pm.imag() == doctest::Approx(-pp.imag()).epsilon(1e-12));
        CHECK(pmd.real() == doctest::Approx(ppd.real()).epsilon(1e-12));
        CHECK(pmd.imag() == doctest::Approx(-ppd.imag()).epsilon(1e-12));
    }
}

TEST_CASE("lower stable bound: fitted sigma0 is positive") {
    for (const char* name : {"const-cauchy", "var-alpha-1d", "rotation-sde"}) {
        ModelSpec m = get_model(name);
        const Vec z = m.d == 1 ? Vec(0.7) : Vec(0.7, -0.2);
        CHECK(fitted_sigma0(m, z) > 0.0);
    }
}

TEST_CASE("Re psi >= sigma0 |xi|^alpha on sampled frequencies") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.5}});
    const Vec z(0.0);
    const double s0 = fitted_sigma0(m, z);
    for (double xi : {1.0, 2.5, 7.0, 31.0}) {
        auto [psi, psid] = stable_exponent(m, z, Vec(xi));
        (void)psid;
        CHECK(psi.real() >= s0 * std::pow(xi, 1.5) - 1e-9);
    }
}

TEST_CASE("mu tail mass scaling identity") {
    ModelSpec m = get_model("var-alpha-1d");
    const Vec x(0.8);
    const double a = m.alpha_at(x);
    for (double r : {0.3, 1.0, 2.0}) {
        for (double c : {0.5, 2.0, 7.0}) {
            CHECK(mu_tail_mass(m, x, c * r) ==
                  doctest::Approx(std::pow(c, -a) * mu_tail_mass(m, x, r)).epsilon(1e-13));
        }
    }
}

TEST_CASE("intrinsic drift") {
    // symmetric pairs cancel
    ModelSpec m = get_model("const-cauchy");
    CHECK(intrinsic_drift(m, Vec(0.0)).norm() == doctest::Approx(0.0));
    // single atom: lambda * direction
    ModelSpec s;
    s.d = 1;
    s.alpha = constant_expr(0.5);
    s.lambda = constant_expr(3.0);
    s.sigma = single_atom_1d(1.0);
    s.alpha_min = s.alpha_max = 0.5;
    s.lambda_min = s.lambda_max = 3.0;
    CHECK(intrinsic_drift(s, Vec(0.0))[0] == doctest::Approx(3.0));
    // d=2 weighted sum
    ModelSpec m2;
    m2.d = 2;
    m2.alpha = constant_expr(1.0);
    m2.lambda = constant_expr(2.0);
    m2.sigma.d = 2;
    m2.sigma.dirs = {Vec(1.0, 0.0), Vec(0.0, 1.0)};
    m2.sigma.weights = {0.5, 0.5};
    m2.alpha_min = m2.alpha_max = 1.0;
    m2.lambda_min = m2.lambda_max = 2.0;
    const Vec u = intrinsic_drift(m2, Vec(0.0, 0.0));
    CHECK(u[0] == doctest::Approx(1.0));
    CHECK(u[1] == doctest::Approx(1.0));
}

TEST_CASE("validator: const-cauchy passes all conditions") {
    ModelSpec m = get_model("const-cauchy");
    NumericalParams p = NumericalParams::recommended(m);
    ValidationReport rep = validate_model(m, p, default_sample_grid(1));
    CHECK(rep.all_pass());
    CHECK(rep.evidence_only);
}

TEST_CASE("validator: degenerate spherical measure fails M1") {
    ModelSpec m;
    m.d = 2;
    m.alpha = constant_expr(1.2);
    m.lambda = constant_expr(1.0);
    m.sigma.d = 2;
    m.sigma.dirs = {Vec(1.0, 0.0)};
    m.sigma.weights = {1.0};
    m.alpha_min = m.alpha_max = 1.2;
    m.lambda_min = m.lambda_max = 1.0;
    NumericalParams p = NumericalParams::recommended(m);
    ValidationReport rep = validate_model(m, p, default_sample_grid(2));
    CHECK(!rep.get("M1").pass);
}

TEST_CASE("validator: alpha out of range fails M0") {
    ModelSpec m;
    m.d = 1;
    m.alpha = constant_expr(2.5);
    m.lambda = constant_expr(1.0);
    m.sigma = symmetric_pair_1d();
    m.alpha_min = 0.5;
    m.alpha_max = 1.9;
    m.lambda_min = m.lambda_max = 1.0;
    NumericalParams p;
    p.s_frak = 0.1;
    p.m_frak = 0.05;
    ValidationReport rep = validate_model(m, p, default_sample_grid(1));
    CHECK(!rep.get("M0").pass);
}

TEST_CASE("numerical params invariants") {
    ModelSpec m = get_model("var-alpha-1d");
    NumericalParams def = NumericalParams::defaults_for(m);
    CHECK_NOTHROW(def.validate(m));
    NumericalParams rec = NumericalParams::recommended(m);
    CHECK_NOTHROW(rec.validate(m));
    CHECK(rec.s_frak > 0.0);
    CHECK(rec.s_frak < 0.5 / m.alpha_max);
    CHECK(rec.zeta_min(m) > 0.5 / m.alpha_max);
    NumericalParams bad = rec;
    bad.s_frak = 0.6 / m.alpha_max;
    CHECK_THROWS_AS(bad.validate(m), Error);
}
