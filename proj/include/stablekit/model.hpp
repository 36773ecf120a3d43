#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stablekit/common.hpp"
#include "stablekit/expr.hpp"
#include "stablekit/spherical.hpp"

namespace stablekit {

/// Signed perturbation kernel nu(x,du).
///
/// Two shapes are supported: a finite list of x-dependent signed atoms
/// (jump vector u_j(x), mass m_j(x)), and the tail-of-mu form
/// nu = -mu(x,du) 1_{|u|>q} produced by truncating the driving noise.
struct PerturbationKernel {
    enum class Kind { Atoms, MuTail };

    struct AtomGen {
        std::array<Expr, 2> jump;  // per coordinate
        Expr mass;                 // signed
    };

    Kind kind = Kind::Atoms;
    std::vector<AtomGen> atoms;
    Expr beta;            // declared tail exponent beta(x) for (N1)
    double eps_nu = 0.0;  // declared margin: alpha(x) - beta(x) >= eps_nu
    double mu_tail_q = 1.0;

    /// Atom list at x (Atoms kind only).
    std::vector<std::pair<Vec, double>> atoms_at(const Vec& x, int d) const;
};

/// Complete description of one stable-like model.
struct ModelSpec {
    int d = 1;
    Expr alpha;
    Expr lambda;
    SphericalMeasure sigma;
    std::array<Expr, 2> drift;  // per coordinate
    std::optional<PerturbationKernel> nu;

    // Declared (M0) bounds and regularity metadata.
    double alpha_min = 0.0, alpha_max = 2.0;
    double lambda_min = 0.0, lambda_max = 0.0;
    double eta = 1.0;          // Hoelder exponent (M2)
    double h_frak = 1.0;       // (B1)
    double eps_balance = 1.0;  // (B1)

    std::string name = "custom";

    double alpha_at(const Vec& x) const { return alpha.eval(x); }
    double lambda_at(const Vec& x) const { return lambda.eval(x); }
    SphericalMeasure sigma_at(const Vec& x) const { return sigma.at(x); }
    Vec drift_at(const Vec& x) const;
    bool has_drift_term() const;

    /// Margin for (N1); alpha_min when nu is absent (condition vacuous).
    double eps_nu() const { return nu ? nu->eps_nu : alpha_min; }

    /// Structural sanity (dimensions, measure invariants).  Throws on errors.
    void check_basic() const;
};

/// Numerical knobs of the construction.
struct NumericalParams {
    double s_frak = 0.0;    // cutoff parameter in zeta(x) = 1/alpha(x) - s_frak
    double m_frak = 0.0;    // theta(x) = alpha(x) + m_frak/2
    double eps_B = 0.0;     // = min{h_frak, eps_balance}/4
    double delta_K1 = 0.0;  // indicator split of K^{1;c}
    int N_K1 = 8;           // power in K^{1;c}
    double c_decay = 0.5;   // exponential constant c of the bounding kernels
    int K_max = 4;
    double tol_series = 1e-4;

    // Pipeline grids.
    double conv_lo = -16.0, conv_hi = 16.0;
    int conv_n = 257;       // shared x/y/z grid nodes per axis
    int freq_n = 0;         // frequency nodes per axis (power of two); 0 = default per d
    int time_nodes = 12;
    unsigned rng_seed = 1234567u;

    /// Spec-formula defaults: s_frak = eta*min{eps_nu, eps_B}/(16 d).
    static NumericalParams defaults_for(const ModelSpec& m);
    /// Desk-scale parameters: same structure but s_frak close to its upper
    /// bound 1/(2 alpha_max), which keeps the Neumann series contractive at
    /// the times the pipeline actually uses.
    static NumericalParams recommended(const ModelSpec& m);

    double zeta(double a) const { return 1.0 / a - s_frak; }
    double zeta_min(const ModelSpec& m) const { return 1.0 / m.alpha_max - s_frak; }
    double theta(const ModelSpec& m, const Vec& x) const {
        return m.alpha_at(x) + 0.5 * m_frak;
    }
    int freq_nodes(int d) const { return freq_n > 0 ? freq_n : (d == 1 ? 4096 : 512); }

    /// Parameter invariants (0 < s_frak < 1/(2 a_max), etc).  Throws on violation.
    void validate(const ModelSpec& m) const;
};

// ---------------------------------------------------------------------------
// Exponent machinery
// ---------------------------------------------------------------------------

/// Radial integral  I(s; alpha) = \int_0^inf (1 - e^{i rho s} + i rho s 1_{rho<=1})
/// rho^{-1-alpha} drho,  computed by adaptive quadrature with a Taylor switch
/// near zero and accelerated oscillatory tails.  Relative accuracy ~1e-10.
Complex stable_radial_integral(double s, double alpha);

/// Characteristic exponents at frequency xi with coefficients frozen at z:
/// first the driftless psi^z, then psi^{z,upsilon} = psi^z - i xi.upsilon(z).
std::pair<Complex, Complex> stable_exponent(const ModelSpec& model, const Vec& z,
                                            const Vec& xi);

/// Intrinsic drift upsilon(z) = lambda(z) sum_i w_i l_i(z).
Vec intrinsic_drift(const ModelSpec& model, const Vec& z);

/// mu(x, {|u| > r}) = lambda(x) r^{-alpha(x)} / alpha(x).
double mu_tail_mass(const ModelSpec& model, const Vec& x, double r);

/// nu(x, {|u| > r}) as a signed sum (0 if nu absent).
double nu_tail_mass(const ModelSpec& model, const Vec& x, double r);

/// Lower stable bound fit: sigma0(z) = min over sphere directions v of
/// Re psi^z(v).  Uses the quadrature exponent route.
double fitted_sigma0(const ModelSpec& model, const Vec& z, int directions = 16);

/// Closed-form coefficient \int_0^inf (1-cos u) u^{-1-alpha} du
/// = Gamma(2-alpha) cos(pi alpha/2) / (alpha (1-alpha)), log-branch at alpha=1.
/// Used by samplers and test oracles, never by stable_exponent itself.
double stable_cosine_coefficient(double alpha);

} // namespace stablekit
