#include "stablekit/validate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stablekit/flow.hpp"
#include "stablekit/spherical.hpp"

namespace stablekit {

bool ValidationReport::all_pass() const {
    for (const auto& c : conditions)
        if (!c.pass) return false;
    return true;
}

const ConditionResult& ValidationReport::get(const std::string& name) const {
    for (const auto& c : conditions)
        if (c.name == name) return c;
    throw Error("validation report: no condition named " + name);
}

std::string ValidationReport::to_json() const {
    std::ostringstream os;
    os << "{\n  \"model\": \"" << model_name << "\",\n  \"evidence_only\": true,\n"
       << "  \"note\": \"sampling-based checks; a pass is evidence, not proof\",\n"
       << "  \"conditions\": [\n";
    for (size_t i = 0; i < conditions.size(); ++i) {
        const auto& c = conditions[i];
        os << "    {\"name\": \"" << c.name << "\", \"pass\": " << (c.pass ? "true" : "false")
           << ", \"fitted_constant\": " << c.fitted_constant << ", \"note\": \"" << c.note
           << "\"}";
        os << (i + 1 < conditions.size() ? ",\n" : "\n");
    }
    os << "  ],\n  \"all_pass\": " << (all_pass() ? "true" : "false") << "\n}\n";
    return os.str();
}

std::vector<Vec> default_sample_grid(int d) {
    std::vector<Vec> pts;
    const int n = 33;
    const double lo = -4.0, hi = 4.0;
    const double h = (hi - lo) / (n - 1);
    if (d == 1) {
        for (int i = 0; i < n; ++i) pts.emplace_back(lo + i * h);
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pts.emplace_back(lo + i * h, lo + j * h);
    }
    return pts;
}

namespace {

// Sampled |nu|(x, {|u| >= r}).
double nu_abs_tail(const ModelSpec& m, const Vec& x, double r) {
    if (!m.nu) return 0.0;
    const PerturbationKernel& nu = *m.nu;
    if (nu.kind == PerturbationKernel::Kind::MuTail)
        return mu_tail_mass(m, x, std::max(r, nu.mu_tail_q));
    double s = 0.0;
    for (const auto& [u, mass] : nu.atoms_at(x, m.d))
        if (u.norm() >= r) s += std::abs(mass);
    return s;
}

// Nearest-neighbour pairs at spacing h and 2h along the axes.
std::vector<std::pair<Vec, Vec>> sample_pairs(const std::vector<Vec>& grid, int d) {
    std::vector<std::pair<Vec, Vec>> pairs;
    const int n = d == 1 ? static_cast<int>(grid.size()) : 33;
    auto at = [&](int i, int j) { return grid[static_cast<size_t>(d == 1 ? i : i * n + j)]; };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < (d == 1 ? 1 : n); ++j) {
            if (i + 1 < n) pairs.emplace_back(at(i, j), at(i + 1, j));
            if (i + 2 < n) pairs.emplace_back(at(i, j), at(i + 2, j));
            if (d == 2 && j + 1 < n) pairs.emplace_back(at(i, j), at(i, j + 1));
            if (d == 2 && j + 2 < n) pairs.emplace_back(at(i, j), at(i, j + 2));
        }
    }
    return pairs;
}

} // namespace

ValidationReport validate_model(const ModelSpec& model, const NumericalParams& params,
                                const std::vector<Vec>& sample_grid) {
    if (sample_grid.empty()) throw Error("validate_model: empty sample grid");
    model.check_basic();
    ValidationReport rep;
    rep.model_name = model.name;

    // --- M0: bounds on alpha and lambda.
    {
        ConditionResult c{"M0", true, 0.0, ""};
        for (const Vec& x : sample_grid) {
            const double a = model.alpha_at(x), l = model.lambda_at(x);
            if (!(a >= model.alpha_min - 1e-12 && a <= model.alpha_max + 1e-12) ||
                !(a > 0.0 && a < 2.0)) {
                c.pass = false;
                c.note = "alpha out of declared bounds at a sampled point";
                break;
            }
            if (!(l >= model.lambda_min - 1e-12 && l <= model.lambda_max + 1e-12) || l <= 0.0) {
                c.pass = false;
                c.note = "lambda out of declared bounds at a sampled point";
                break;
            }
        }
        rep.conditions.push_back(c);
    }

    // --- M1: nondegeneracy min over sampled x and directions of sum w_i (v.l_i)^2.
    {
        ConditionResult c{"M1", false, 0.0, ""};
        double worst = 1e300;
        const int ndir = 16;
        for (const Vec& x : sample_grid) {
            const SphericalMeasure sig = model.sigma_at(x);
            if (model.d == 1) {
                double q = 0.0;
                for (size_t i = 0; i < sig.size(); ++i)
                    q += sig.weights[i] * sig.dirs[i][0] * sig.dirs[i][0];
                worst = std::min(worst, q);
            } else {
                for (int k = 0; k < ndir; ++k) {
                    const double ang = 3.14159265358979323846 * 2.0 * k / ndir;
                    const Vec v(std::cos(ang), std::sin(ang));
                    double q = 0.0;
                    for (size_t i = 0; i < sig.size(); ++i) {
                        const double dp = v.dot(sig.dirs[i]);
                        q += sig.weights[i] * dp * dp;
                    }
                    worst = std::min(worst, q);
                }
            }
        }
        c.fitted_constant = worst;
        c.pass = worst > 1e-10;
        if (!c.pass) c.note = "degenerate direction found (min quadratic form ~ 0)";
        rep.conditions.push_back(c);
    }

    // --- M2: Hoelder quotient of alpha, lambda, W1(sigma) over pairs at two scales.
    {
        ConditionResult c{"M2", false, 0.0, ""};
        auto pairs = sample_pairs(sample_grid, model.d);
        double worst_fine = 0.0, worst_coarse = 0.0;
        for (const auto& [x, y] : pairs) {
            const double dist = (x - y).norm();
            const double lhs = std::abs(model.alpha_at(x) - model.alpha_at(y)) +
                               std::abs(model.lambda_at(x) - model.lambda_at(y)) +
                               w1_sphere(model.sigma_at(x), model.sigma_at(y));
            const double q = lhs / std::pow(dist, model.eta);
            if (dist < 0.3)
                worst_fine = std::max(worst_fine, q);
            else
                worst_coarse = std::max(worst_coarse, q);
        }
        c.fitted_constant = std::max(worst_fine, worst_coarse);
        const double growth = worst_coarse > 1e-14 ? worst_fine / worst_coarse : 1.0;
        c.pass = std::isfinite(c.fitted_constant) && growth <= 4.0;
        c.note = "fitted C over sampled pairs; scale growth factor " + std::to_string(growth);
        rep.conditions.push_back(c);
    }

    // --- N0: uniformly integrable tails of |nu|.
    {
        ConditionResult c{"N0", true, 0.0, ""};
        if (model.nu) {
            double worst = 0.0;
            for (const Vec& x : sample_grid) worst = std::max(worst, nu_abs_tail(model, x, 64.0));
            c.fitted_constant = worst;
            c.pass = worst < 0.25;  // tail far out already small on samples
            c.note = "sup over samples of |nu|(x,{|u|>64})";
        } else {
            c.note = "nu absent";
        }
        rep.conditions.push_back(c);
    }

    // --- N1: tail bound |nu|(x,{|u|>=r}) <= C r^{-beta(x)} and margin alpha-beta >= eps_nu.
    {
        ConditionResult c{"N1", true, 0.0, ""};
        if (model.nu) {
            double worstC = 0.0;
            bool margin_ok = true;
            for (const Vec& x : sample_grid) {
                const double beta = model.nu->kind == PerturbationKernel::Kind::Atoms
                                        ? model.nu->beta.eval(x)
                                        : model.alpha_at(x) - model.nu->eps_nu;
                if (model.alpha_at(x) - beta < model.nu->eps_nu - 1e-12) margin_ok = false;
                for (int k = 0; k < 8; ++k) {
                    const double r = std::pow(2.0, -k);  // 8 radii in (0,1]
                    const double lhs = nu_abs_tail(model, x, r);
                    worstC = std::max(worstC, lhs * std::pow(r, beta));
                }
            }
            c.fitted_constant = worstC;
            c.pass = std::isfinite(worstC) && margin_ok;
            c.note = margin_ok ? "fitted C over sampled (x,r)"
                               : "declared margin eps_nu violated at a sample";
        } else {
            c.note = "nu absent";
        }
        rep.conditions.push_back(c);
    }

    // --- B0: boundedness of b and continuity of t -> b_t(x).
    {
        ConditionResult c{"B0", true, 0.0, ""};
        double supb = 0.0;
        bool cont = true;
        for (const Vec& x : sample_grid) supb = std::max(supb, model.drift_at(x).norm());
        const Vec x0 = sample_grid[sample_grid.size() / 2];
        Vec prev = compensated_drift(model, x0, 1e-3);
        for (double t = 2e-3; t <= 1.0; t *= 1.3) {
            const Vec cur = compensated_drift(model, x0, t);
            if (!std::isfinite(cur.norm())) cont = false;
            prev = cur;
        }
        c.fitted_constant = supb;
        c.pass = std::isfinite(supb) && cont;
        c.note = "sup |b| over samples";
        rep.conditions.push_back(c);
    }

    // --- B1: dynamic Hoelder quotient of b_t over pairs and times.
    {
        ConditionResult c{"B1", true, 0.0, ""};
        if (model.has_drift_term() || !model.sigma.is_symmetric() || model.nu) {
            auto pairs = sample_pairs(sample_grid, model.d);
            double worst_fine = 0.0, worst_coarse = 0.0;
            const double eps = model.eps_balance, hf = model.h_frak;
            for (size_t pi = 0; pi < pairs.size(); pi += 3) {
                const auto& [x, y] = pairs[pi];
                const double dist = (x - y).norm();
                for (double t : {0.01, 0.05, 0.2, 1.0}) {
                    const Vec bx = compensated_drift(model, x, t);
                    const Vec by = compensated_drift(model, y, t);
                    const double gx = 1.0 - model.alpha_at(x) + hf;
                    const double gy = 1.0 - model.alpha_at(y) + hf;
                    const double dx = -1.0 + 1.0 / model.alpha_at(x);
                    const double dy = -1.0 + 1.0 / model.alpha_at(y);
                    const double rhs = std::pow(dist, gx) + std::pow(dist, gy) +
                                       (std::pow(t, dx) + std::pow(t, dy)) * std::pow(dist, eps);
                    const double q = (bx - by).norm() / rhs;
                    if (dist < 0.3)
                        worst_fine = std::max(worst_fine, q);
                    else
                        worst_coarse = std::max(worst_coarse, q);
                }
            }
            c.fitted_constant = std::max(worst_fine, worst_coarse);
            const double growth = worst_coarse > 1e-14 ? worst_fine / worst_coarse : 1.0;
            c.pass = std::isfinite(c.fitted_constant) && growth <= 4.0;
            c.note = "fitted C over sampled pairs/times; scale growth " + std::to_string(growth);
        } else {
            c.note = "symmetric driftless model: b_t == 0";
        }
        rep.conditions.push_back(c);
    }

    // --- C0/C1/C2 smoke checks.
    {
        ConditionResult c{"C0", true, 0.0, "drift expression finite and sampled-continuous"};
        for (const Vec& x : sample_grid)
            if (!std::isfinite(model.drift_at(x).norm())) c.pass = false;
        rep.conditions.push_back(c);

        ConditionResult c1{"C1", true, 0.0, "checked by atom-map continuity only"};
        const Vec x0 = sample_grid[sample_grid.size() / 3];
        Vec x1 = x0;
        x1[0] += 1e-4;
        const double dW = w1_sphere(model.sigma_at(x0), model.sigma_at(x1));
        c1.fitted_constant = dW / 1e-4;
        c1.pass = std::isfinite(dW);
        rep.conditions.push_back(c1);

        ConditionResult c2{"C2", true, 0.0, "no sampled nu atom sits exactly on |u|=1"};
        if (model.nu && model.nu->kind == PerturbationKernel::Kind::Atoms) {
            for (const Vec& x : sample_grid)
                for (const auto& [u, mass] : model.nu->atoms_at(x, model.d))
                    if (std::abs(u.norm() - 1.0) < 1e-12 && std::abs(mass) > 0.0) c2.pass = false;
        }
        rep.conditions.push_back(c2);
    }

    (void)params;
    return rep;
}

} // namespace stablekit
