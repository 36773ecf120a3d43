#include <doctest.h>

#include <cmath>

#include "stablekit/flow.hpp"
#include "stablekit/quadrature.hpp"
#include "stablekit/registry.hpp"

using namespace stablekit;

TEST_CASE("compensated drift: symmetric kernel leaves b unchanged") {
    ModelSpec m = get_model("var-alpha-1d", {{"b_amp", 0.5}});
    for (double t : {0.01, 0.3, 0.9}) {
        const Vec x(0.7);
        const Vec bt = compensated_drift(m, x, t);
        CHECK(bt[0] == doctest::Approx(m.drift_at(x)[0]).epsilon(1e-13));
    }
}

TEST_CASE("compensated drift: empty annulus for t >= 1") {
    ModelSpec skew;
    skew.d = 1;
    skew.alpha = constant_expr(0.5);
    skew.lambda = constant_expr(1.0);
    skew.sigma = single_atom_1d(1.0);
    skew.alpha_min = skew.alpha_max = 0.5;
    skew.lambda_min = skew.lambda_max = 1.0;
    CHECK(compensated_drift(skew, Vec(0.0), 1.0)[0] == doctest::Approx(0.0));
    CHECK(compensated_drift(skew, Vec(0.0), 5.0)[0] == doctest::Approx(0.0));
}

TEST_CASE("compensated drift: exact antiderivative for alpha = 1/2") {
    ModelSpec skew;
    skew.d = 1;
    skew.alpha = constant_expr(0.5);
    skew.lambda = constant_expr(1.0);
    skew.sigma = single_atom_1d(1.0);
    skew.alpha_min = skew.alpha_max = 0.5;
    skew.lambda_min = skew.lambda_max = 1.0;
    const Vec bt = compensated_drift(skew, Vec(0.0), 0.25);
    CHECK(bt[0] == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("mollified drift reproduces constants exactly") {
    ModelSpec m = get_model("const-cauchy");
    m.drift[0] = constant_expr(0.75);
    NumericalParams p = NumericalParams::recommended(m);
    for (double t : {0.05, 0.4, 1.0}) {
        const Vec B = mollified_drift(m, p, Vec(0.3), t);
        CHECK(B[0] == doctest::Approx(0.75).epsilon(1e-10));
    }
}

TEST_CASE("mollified drift of sin stays within the mollifier radius bound") {
    ModelSpec m = get_model("const-alpha", {{"alpha", 1.4}});
    m.drift[0] = parse_expr("sin(x1)");
    NumericalParams p = NumericalParams::recommended(m);
    for (double t : {0.05, 0.3, 1.0}) {
        const Vec x(0.9);
        const double h = std::pow(t, 1.0 / p.theta(m, x));
        const double B = mollified_drift(m, p, x, t)[0];
        CHECK(std::abs(B - std::sin(0.9)) <= h + 1e-10);
    }
}

TEST_CASE("mollified drift approximation rate (regression over computed values)") {
    ModelSpec m = get_model("var-alpha-1d", {{"b_amp", 1.0}});
    NumericalParams p = NumericalParams::recommended(m);
    std::vector<double> ts{0.01, 0.03, 0.1, 0.3, 1.0}, ys;
    for (double t : ts) {
        double sup = 0.0;
        for (double x = -2.0; x <= 2.0; x += 0.25) {
            const double diff =
                (compensated_drift(m, Vec(x), t) - mollified_drift(m, p, Vec(x), t)).norm();
            const double a = m.alpha_at(Vec(x));
            sup = std::max(sup, diff * std::pow(t, -1.0 / a));
        }
        ys.push_back(std::max(sup, 1e-300));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(ts.size());
    for (int i = 0; i < n; ++i) {
        const double lx = std::log(ts[static_cast<size_t>(i)]);
        const double ly = std::log(ys[static_cast<size_t>(i)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= -1.0 + 0.5 * p.eps_B);
}

TEST_CASE("flow of a constant field is linear motion") {
    ModelSpec m = get_model("const-cauchy");
    m.drift[0] = constant_expr(2.0);
    NumericalParams p = NumericalParams::recommended(m);
    FlowSolution fwd = solve_flow(m, p, Vec(1.0), 0.5, FlowDirection::Forward);
    CHECK(fwd.terminal()[0] == doctest::Approx(2.0).epsilon(1e-8));
    FlowSolution back = solve_flow(m, p, Vec(1.0), 0.5, FlowDirection::Backward);
    CHECK(std::abs(back.terminal()[0]) < 1e-8);
}

TEST_CASE("synthetic linear field integrates to the exact exponential") {
    auto field = [](double, const Vec& y) { return -1.0 * y; };
    FlowSolution sol = solve_flow_field(field, Vec(1.0), 1.0, 1.0, FlowDirection::Forward);
    CHECK(sol.terminal()[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
    CHECK(sol.at(0.5)[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-4));
}

TEST_CASE("flow residual at midpoints") {
    auto field = [](double s, const Vec& y) {
        Vec v(0.3 * std::sin(y[0]) + 0.1 * s);
        return v;
    };
    FlowSolution sol = solve_flow_field(field, Vec(0.2), 0.8, 0.5, FlowDirection::Forward);
    for (size_t k = 1; k + 1 < sol.times.size(); ++k) {
        const double tm = 0.5 * (sol.times[k] + sol.times[k + 1]);
        const double dt = 1e-4;
        const Vec d = (1.0 / (2.0 * dt)) * (sol.at(tm + dt) - sol.at(tm - dt));
        const Vec f = field(tm, sol.at(tm));
        CHECK((d - f).norm() < 1e-3);
    }
}

TEST_CASE("backward flow stays within the sqrt-t envelope") {
    ModelSpec m = get_model("var-alpha-1d", {{"b_amp", 1.0}});
    NumericalParams p = NumericalParams::recommended(m);
    double C = 0.0;
    for (double t : {0.01, 0.1, 1.0})
        for (double x = -2.0; x <= 2.0; x += 0.5)
            C = std::max(C, compensated_drift(m, Vec(x), t).norm() * std::sqrt(t));
    for (double t : {0.05, 0.3, 1.0}) {
        for (double y = -2.0; y <= 2.0; y += 0.5) {
            FlowSolution k = solve_flow(m, p, Vec(y), t, FlowDirection::Backward);
            CHECK((k.terminal() - Vec(y)).norm() <= 2.0 * C * std::sqrt(t) + 1e-8);
        }
    }
}

TEST_CASE("anchored flow semigroup property") {
    ModelSpec m = get_model("var-alpha-1d", {{"b_amp", 1.0}});
    NumericalParams p = NumericalParams::recommended(m);
    const double t = 0.6;
    auto field = [&](double s, const Vec& y) {
        return mollified_drift(m, p, y, std::max(t - s, 1e-12));
    };
    FlowSolution full = solve_flow_field(field, Vec(0.4), t, p.eps_B, FlowDirection::Anchored);
    FlowSolution half1 =
        solve_flow_field(field, Vec(0.4), 0.5 * t, p.eps_B, FlowDirection::Anchored);
    auto field2 = [&](double s, const Vec& y) {
        return mollified_drift(m, p, y, std::max(t - (0.5 * t + s), 1e-12));
    };
    FlowSolution half2 = solve_flow_field(field2, half1.terminal(), 0.5 * t, p.eps_B,
                                          FlowDirection::Anchored);
    CHECK((full.terminal() - half2.terminal()).norm() < 1e-6);
}

TEST_CASE("flow comparability with fitted constants") {
    ModelSpec m = get_model("var-alpha-1d", {{"b_amp", 1.0}});
    NumericalParams p = NumericalParams::recommended(m);
    const double eps_kappa = 0.125 * m.eta * std::min(m.eps_nu(), p.eps_B);
    auto gap = [&](double x, double y, double t, double s) {
        FlowSolution kappa_full = solve_flow(m, p, Vec(y), t, FlowDirection::Backward);
        auto field = [&](double u, const Vec& z) {
            return mollified_drift(m, p, z, std::max(t - u, 1e-12));
        };
        FlowSolution anchored =
            solve_flow_field(field, Vec(x), s, p.eps_B, FlowDirection::Anchored);
        FlowSolution kappa_part = solve_flow(m, p, Vec(y), t - s, FlowDirection::Backward);
        const double lhs = (kappa_part.terminal() - anchored.terminal()).norm();
        const double base = (kappa_full.terminal() - Vec(x)).norm();
        return std::make_pair(lhs, base);
    };
    double C = 1e-6;
    for (double t : {0.2, 0.6}) {
        for (double x : {-1.0, 0.5}) {
            for (double y : {-0.5, 1.0}) {
                auto [lhs, base] = gap(x, y, t, 0.5 * t);
                const double corr = std::pow(t, 1.0 / m.alpha_at(Vec(x)) + eps_kappa);
                for (double c = 0.05; c < 40.0; c *= 1.3) {
                    if (lhs <= std::exp(c * std::pow(t, p.eps_B)) * base + c * corr &&
                        lhs >= std::exp(-c * std::pow(t, p.eps_B)) * base - c * corr) {
                        C = std::max(C, c);
                        break;
                    }
                }
            }
        }
    }
    for (double t : {0.3, 0.8}) {
        for (double x : {-0.7, 1.2}) {
            for (double y : {0.2, -1.3}) {
                auto [lhs, base] = gap(x, y, t, 0.4 * t);
                const double corr = std::pow(t, 1.0 / m.alpha_at(Vec(x)) + eps_kappa);
                const double C2 = 2.0 * C + 0.5;
                CHECK(lhs <= std::exp(C2 * std::pow(t, p.eps_B)) * base + C2 * corr);
                CHECK(lhs >= std::exp(-C2 * std::pow(t, p.eps_B)) * base - C2 * corr);
            }
        }
    }
}

TEST_CASE("w correction: closed form arithmetic at alpha = 1/2") {
    ModelSpec skew;
    skew.d = 1;
    skew.alpha = constant_expr(0.5);
    skew.lambda = constant_expr(1.0);
    skew.sigma = single_atom_1d(1.0);
    skew.alpha_min = skew.alpha_max = 0.5;
    skew.lambda_min = skew.lambda_max = 1.0;
    const Vec w = w_correction(skew, 1.0, 0.5, Vec(0.0));
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("w correction: symmetric kernel gives zero") {
    ModelSpec m = get_model("const-cauchy");
    CHECK(w_correction(m, 0.7, 0.2, Vec(0.3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("w correction integrates to the intrinsic drift") {
    ModelSpec skew;
    skew.d = 1;
    skew.alpha = constant_expr(0.7);
    skew.lambda = constant_expr(1.3);
    skew.sigma = single_atom_1d(1.0);
    skew.alpha_min = skew.alpha_max = 0.7;
    skew.lambda_min = skew.lambda_max = 1.3;
    const double t = 0.8;
    const Vec ups = intrinsic_drift(skew, Vec(0.0));
    const double I = adaptive_quad(
        [&](double s) { return w_correction(skew, t, std::max(s, 1e-14), Vec(0.0))[0]; }, 0.0,
        t, 1e-9);
    CHECK(I == doctest::Approx(ups[0]).epsilon(1e-6));
}

TEST_CASE("w correction rejects bad arguments") {
    ModelSpec m = get_model("const-cauchy");
    CHECK_THROWS_AS(w_correction(m, 0.5, 0.5, Vec(0.0)), Error);
    CHECK_THROWS_AS(w_correction(m, 0.5, 0.7, Vec(0.0)), Error);
}
