#include "stablekit/registry.hpp"

#include <cmath>
#include <sstream>

namespace stablekit {

namespace {

double getp(const std::map<std::string, double>& ov, const ModelTemplate& tpl,
            const std::string& name) {
    for (const auto& p : tpl.params) {
        if (p.name != name) continue;
        auto it = ov.find(name);
        if (it == ov.end()) return p.def;
        if (it->second < p.lo || it->second > p.hi)
            throw Error("model parameter '" + name + "' = " + std::to_string(it->second) +
                        " outside [" + std::to_string(p.lo) + ", " + std::to_string(p.hi) + "]");
        return it->second;
    }
    throw Error("model template has no parameter '" + name + "'");
}

void check_known(const std::map<std::string, double>& ov, const ModelTemplate& tpl) {
    for (const auto& [k, v] : ov) {
        (void)v;
        bool found = false;
        for (const auto& p : tpl.params) found = found || p.name == k;
        if (!found) throw Error("unknown parameter '" + k + "' for model " + tpl.name);
    }
}

ModelTemplate tpl_const_cauchy() {
    return {"const-cauchy", "constant-coefficient Cauchy benchmark", {}};
}

ModelTemplate tpl_const_alpha() {
    return {"const-alpha",
            "constant-index symmetric stable",
            {{"alpha", 1.4, 0.3, 1.95}, {"lambda", -1.0, -1.0, 100.0}}};
}

ModelTemplate tpl_var_alpha() {
    return {"var-alpha-1d",
            "state-dependent index alpha(x) = a0 + a1 tanh(x)",
            {{"alpha0", 1.2, 0.5, 1.8}, {"a", 0.1, 0.0, 0.3}, {"b_amp", 0.0, 0.0, 2.0}}};
}

ModelTemplate tpl_resetting() {
    return {"resetting",
            "symmetric stable plus a resetting perturbation (doubling or jump to 0)",
            {{"alpha", 0.8, 0.3, 1.9}, {"beta", 0.1, 0.01, 1.0}}};
}

ModelTemplate tpl_rotation() {
    return {"rotation-sde",
            "d=2 SDE dX = a(X-)dZ with a rotation coefficient aligning e1 with x/|x|",
            {{"alpha", 1.4, 0.5, 1.9}}};
}

ModelTemplate tpl_truncated() {
    return {"truncated-noise",
            "constant-index stable with the noise truncated at jump size q",
            {{"alpha", 1.2, 0.5, 1.9}, {"q", 0.5, 0.05, 1.0}}};
}

} // namespace

std::vector<ModelTemplate> list_models() {
    return {tpl_const_cauchy(), tpl_const_alpha(), tpl_var_alpha(),
            tpl_resetting(),    tpl_rotation(),    tpl_truncated()};
}

ModelSpec get_model(const std::string& name, const std::map<std::string, double>& overrides) {
    const double pi = 3.14159265358979323846;
    if (name == "const-cauchy") {
        check_known(overrides, tpl_const_cauchy());
        ModelSpec m;
        m.name = name;
        m.d = 1;
        m.alpha = constant_expr(1.0);
        m.lambda = constant_expr(2.0 / pi);
        m.sigma = symmetric_pair_1d();
        m.alpha_min = m.alpha_max = 1.0;
        m.lambda_min = m.lambda_max = 2.0 / pi;
        m.eta = 1.0;
        m.h_frak = 1.0;
        m.eps_balance = 1.0;
        m.check_basic();
        return m;
    }
    if (name == "const-alpha") {
        const ModelTemplate tpl = tpl_const_alpha();
        check_known(overrides, tpl);
        const double a = getp(overrides, tpl, "alpha");
        double lam = getp(overrides, tpl, "lambda");
        if (lam <= 0.0) lam = 1.0 / stable_cosine_coefficient(a);  // psi(xi) = |xi|^a
        ModelSpec m;
        m.name = name;
        m.d = 1;
        m.alpha = constant_expr(a);
        m.lambda = constant_expr(lam);
        m.sigma = symmetric_pair_1d();
        m.alpha_min = m.alpha_max = a;
        m.lambda_min = m.lambda_max = lam;
        m.check_basic();
        return m;
    }
    if (name == "var-alpha-1d") {
        const ModelTemplate tpl = tpl_var_alpha();
        check_known(overrides, tpl);
        const double a0 = getp(overrides, tpl, "alpha0");
        const double av = getp(overrides, tpl, "a");
        const double bamp = getp(overrides, tpl, "b_amp");
        ModelSpec m;
        m.name = name;
        m.d = 1;
        std::ostringstream ae;
        ae << "clamp(" << a0 << "+" << av << "*tanh(x1)," << (a0 - av) << "," << (a0 + av)
           << ")";
        m.alpha = parse_expr(ae.str());
        m.lambda = constant_expr(1.0);
        m.sigma = symmetric_pair_1d();
        if (bamp > 0.0) {
            std::ostringstream be;
            be << bamp << "*sin(x1)";
            m.drift[0] = parse_expr(be.str());
        }
        m.alpha_min = a0 - av;
        m.alpha_max = a0 + av;
        m.lambda_min = m.lambda_max = 1.0;
        m.eta = 1.0;
        m.h_frak = std::min(1.0, m.alpha_min);  // gamma(x) = 1 - alpha(x) + h > 1 - alpha
        m.eps_balance = 1.0;
        m.check_basic();
        return m;
    }
    if (name == "resetting") {
        const ModelTemplate tpl = tpl_resetting();
        check_known(overrides, tpl);
        const double a = getp(overrides, tpl, "alpha");
        const double beta = getp(overrides, tpl, "beta");
        if (beta >= a) throw Error("resetting: beta must stay below alpha");
        ModelSpec m;
        m.name = name;
        m.d = 1;
        m.alpha = constant_expr(a);
        m.lambda = constant_expr(2.0);  // du/|u|^{1+a} in polar form
        m.sigma = symmetric_pair_1d();
        PerturbationKernel nu;
        nu.kind = PerturbationKernel::Kind::Atoms;
        PerturbationKernel::AtomGen g1;
        g1.jump[0] = parse_expr("x1");
        g1.mass = parse_expr("1/(1+abs(x1))");
        PerturbationKernel::AtomGen g2;
        g2.jump[0] = parse_expr("-x1");
        g2.mass = parse_expr("1/(1+abs(x1))");
        nu.atoms = {g1, g2};
        nu.beta = constant_expr(beta);
        nu.eps_nu = a - beta;
        m.nu = nu;
        m.alpha_min = m.alpha_max = a;
        m.lambda_min = m.lambda_max = 2.0;
        m.check_basic();
        return m;
    }
    if (name == "rotation-sde") {
        const ModelTemplate tpl = tpl_rotation();
        check_known(overrides, tpl);
        const double a = getp(overrides, tpl, "alpha");
        ModelSpec m;
        m.name = name;
        m.d = 2;
        m.alpha = constant_expr(a);
        const double lam = 2.0 / stable_cosine_coefficient(a);
        m.lambda = constant_expr(lam);
        m.sigma = cross_2d();
        m.sigma.rotation.kind = RotationMap::Kind::AlignE1;
        m.alpha_min = m.alpha_max = a;
        m.lambda_min = m.lambda_max = lam;
        m.eta = 1.0;
        m.check_basic();
        return m;
    }
    if (name == "truncated-noise") {
        const ModelTemplate tpl = tpl_truncated();
        check_known(overrides, tpl);
        const double a = getp(overrides, tpl, "alpha");
        const double q = getp(overrides, tpl, "q");
        ModelSpec m;
        m.name = name;
        m.d = 1;
        m.alpha = constant_expr(a);
        const double lam = 1.0 / stable_cosine_coefficient(a);
        m.lambda = constant_expr(lam);
        m.sigma = symmetric_pair_1d();
        PerturbationKernel nu;
        nu.kind = PerturbationKernel::Kind::MuTail;
        nu.mu_tail_q = q;
        nu.eps_nu = 0.5 * a;
        m.nu = nu;
        m.alpha_min = m.alpha_max = a;
        m.lambda_min = m.lambda_max = lam;
        m.check_basic();
        return m;
    }
    throw Error("unknown model name '" + name + "'");
}

std::string list_models_json() {
    std::ostringstream os;
    os << "[\n";
    const auto tpls = list_models();
    for (size_t i = 0; i < tpls.size(); ++i) {
        os << "  {\"name\": \"" << tpls[i].name << "\", \"parameters\": [";
        for (size_t j = 0; j < tpls[i].params.size(); ++j) {
            const auto& p = tpls[i].params[j];
            os << (j ? ", " : "") << "{\"name\": \"" << p.name << "\", \"default\": " << p.def
               << ", \"lo\": " << p.lo << ", \"hi\": " << p.hi << "}";
        }
        os << "], \"paper_anchor\": \"" << tpls[i].anchor << "\"}";
        os << (i + 1 < tpls.size() ? ",\n" : "\n");
    }
    os << "]\n";
    return os.str();
}

} // namespace stablekit
