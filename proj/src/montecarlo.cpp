#include "stablekit/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stablekit/parallel.hpp"
#include "stablekit/quadrature.hpp"
#include "stablekit/flow.hpp"

namespace stablekit {

namespace {
const double kPi = 3.14159265358979323846;
const double kEulerGamma = 0.57721566490153286061;

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream) {
    uint64_t st = seed ^ (0x6a09e667f3bcc909ULL * (stream + 1));
    s0 = splitmix64(st);
    s1 = splitmix64(st);
    if (s0 == 0 && s1 == 0) s1 = 1;
}

uint64_t RngStream::next_u64() {
    const uint64_t x = s0;
    const uint64_t y = s1;
    s0 = y;
    uint64_t z = x;
    z ^= z << 23;
    s1 = z ^ y ^ (z >> 17) ^ (y >> 26);
    return s1 + y;
}

double RngStream::uniform() {
    // 53-bit mantissa in (0,1)
    const uint64_t r = next_u64() >> 11;
    return (static_cast<double>(r) + 0.5) * (1.0 / 9007199254740992.0);
}

double RngStream::exponential() { return -std::log(uniform()); }

double RngStream::normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// ---------------------------------------------------------------------------
// Stable sampling (Chambers-Mallows-Stuck per ray)
// ---------------------------------------------------------------------------

double sample_stable_ray(double alpha, double c, RngStream& rng) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw Error("sample_stable_ray: alpha outside (0,2)");
    if (c <= 0.0) return 0.0;
    const double V = kPi * (rng.uniform() - 0.5);
    const double W = rng.exponential();
    if (std::abs(alpha - 1.0) < 1e-9) {
        // S1, beta = 1:  a Z + m  with a = c pi/2, m = c (1 - gamma_E).
        const double beta = 1.0;
        const double pb = kPi / 2.0 + beta * V;
        const double Z =
            (2.0 / kPi) * (pb * std::tan(V) - beta * std::log((W * std::cos(V)) / pb));
        const double a = c * kPi / 2.0;
        // scaling sigma Z for alpha=1 shifts by (2/pi) beta sigma ln sigma
        return a * Z + (2.0 / kPi) * beta * a * std::log(a) + c * (1.0 - kEulerGamma);
    }
    const double beta = 1.0;
    const double tg = std::tan(kPi * alpha / 2.0);
    const double B = std::atan(beta * tg) / alpha;
    const double S = std::pow(1.0 + beta * beta * tg * tg, 0.5 / alpha);
    const double Z = S * std::sin(alpha * (V + B)) / std::pow(std::cos(V), 1.0 / alpha) *
                     std::pow(std::cos(V - alpha * (V + B)) / W, (1.0 - alpha) / alpha);
    const double sigma = std::pow(c * stable_cosine_coefficient(alpha), 1.0 / alpha);
    const double mu = -c / (1.0 - alpha);
    return sigma * Z + mu;
}

std::vector<Vec> sample_stable(double alpha, const SphericalMeasure& atoms, double lambda,
                               long n, uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw Error("sample_stable: alpha outside (0,2)");
    atoms.validate();
    std::vector<Vec> out(static_cast<size_t>(n), zero_vec(atoms.d));
    parallel_for(n, [&](long i) {
        RngStream rng(seed, static_cast<uint64_t>(i));
        Vec x = zero_vec(atoms.d);
        for (size_t k = 0; k < atoms.size(); ++k)
            x += sample_stable_ray(alpha, lambda * atoms.weights[k], rng) * atoms.dirs[k];
        out[static_cast<size_t>(i)] = x;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

namespace {

// One Euler step of the full frozen-coefficient generator (exact stable
// increment per atom plus nu thinning).
Vec step_cms(const ModelSpec& model, const Vec& x, double h, RngStream& rng) {
    Vec nxt = x + h * model.drift_at(x);
    const double a = model.alpha_at(x);
    const double lam = model.lambda_at(x);
    const SphericalMeasure sig = model.sigma_at(x);
    for (size_t k = 0; k < sig.size(); ++k)
        nxt += sample_stable_ray(a, h * lam * sig.weights[k], rng) * sig.dirs[k];
    if (model.nu) {
        if (model.nu->kind != PerturbationKernel::Kind::Atoms)
            throw Error("step_cms: tail-of-mu perturbation requires the jump scheme");
        for (const auto& [u, m] : model.nu->atoms_at(x, model.d)) {
            if (m < 0.0)
                throw Error("simulate_paths: negative nu atoms require the tail-of-mu "
                            "coupling; atom thinning covers nu_+ only");
            const double p = m * h;
            if (p > 1.0)
                throw Error("simulate_paths: h too large for nu thinning (p > 1)");
            if (rng.uniform() < p) nxt += u;
        }
    }
    return nxt;
}

// Truncated scheme: jumps of radial size > q are suppressed; band jumps
// simulated individually, sub-band jumps by a matched Gaussian.
Vec step_truncated(const ModelSpec& model, const Vec& x, double h, double q,
                   RngStream& rng) {
    Vec nxt = x + h * model.drift_at(x);
    const double a = model.alpha_at(x);
    const double lam = model.lambda_at(x);
    const SphericalMeasure sig = model.sigma_at(x);
    // delta so that the expected band count stays ~8 per step
    const double target = 8.0;
    for (size_t k = 0; k < sig.size(); ++k) {
        const double c = lam * sig.weights[k];
        double delta =
            std::pow(target * a / (h * c) + std::pow(q, -a), -1.0 / a);
        delta = std::min(delta, 0.5 * q);
        // band [delta, q]: Poisson jumps, inverse-CDF radius
        const double rate = h * c * (std::pow(delta, -a) - std::pow(q, -a)) / a;
        int count = 0;
        {
            // Poisson by exponential gaps (rate is O(10))
            double acc = rng.exponential();
            while (acc < rate) {
                ++count;
                acc += rng.exponential();
            }
        }
        double jump_sum = 0.0;
        for (int j = 0; j < count; ++j) {
            const double u = rng.uniform();
            const double rho =
                std::pow(std::pow(delta, -a) - u * (std::pow(delta, -a) - std::pow(q, -a)),
                         -1.0 / a);
            jump_sum += rho;
        }
        // centering (compensation 1_{|u|<=1} with q < 1 compensates everything)
        const double mean_band = h * c * radial_power_integral(delta, q, a);
        // small-jump Gaussian proxy (Asmussen-Rosinski)
        const double var_small = h * c * std::pow(delta, 2.0 - a) / (2.0 - a);
        const double g = std::sqrt(var_small) * rng.normal();
        nxt += (jump_sum - mean_band + g) * sig.dirs[k];
    }
    return nxt;
}

} // namespace

PathEnsemble simulate_paths(const ModelSpec& model, const Vec& x0, double t, double h, long n,
                            uint64_t seed) {
    if (h <= 0.0 || h > t) throw Error("simulate_paths: need 0 < h <= t");
    const bool truncated =
        model.nu && model.nu->kind == PerturbationKernel::Kind::MuTail;
    if (truncated) return simulate_paths_truncated(model, x0, t, h, n, seed, model.nu->mu_tail_q);
    PathEnsemble ens;
    ens.seed = seed;
    ens.h = h;
    ens.n = n;
    ens.scheme = "euler-cms";
    ens.terminal.assign(static_cast<size_t>(n), zero_vec(model.d));
    const long steps = static_cast<long>(std::ceil(t / h - 1e-12));
    parallel_for(n, [&](long i) {
        RngStream rng(seed, static_cast<uint64_t>(i));
        Vec x = x0;
        double remaining = t;
        for (long s = 0; s < steps; ++s) {
            const double hs = std::min(h, remaining);
            x = step_cms(model, x, hs, rng);
            remaining -= hs;
        }
        ens.terminal[static_cast<size_t>(i)] = x;
    });
    return ens;
}

PathEnsemble simulate_paths_truncated(const ModelSpec& model, const Vec& x0, double t,
                                      double h, long n, uint64_t seed, double q) {
    if (h <= 0.0 || h > t) throw Error("simulate_paths: need 0 < h <= t");
    PathEnsemble ens;
    ens.seed = seed;
    ens.h = h;
    ens.n = n;
    ens.scheme = "euler-jump-truncated";
    ens.terminal.assign(static_cast<size_t>(n), zero_vec(model.d));
    const long steps = static_cast<long>(std::ceil(t / h - 1e-12));
    parallel_for(n, [&](long i) {
        RngStream rng(seed, static_cast<uint64_t>(i));
        Vec x = x0;
        double remaining = t;
        for (long s = 0; s < steps; ++s) {
            const double hs = std::min(h, remaining);
            x = step_truncated(model, x, hs, q, rng);
            remaining -= hs;
        }
        ens.terminal[static_cast<size_t>(i)] = x;
    });
    return ens;
}

void PathEnsemble::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    const int d = terminal.empty() ? 1 : terminal.front().d;
    out << (d == 1 ? "x1\n" : "x1,x2\n");
    out.precision(12);
    for (const Vec& v : terminal) {
        if (d == 1)
            out << v[0] << '\n';
        else
            out << v[0] << ',' << v[1] << '\n';
    }
}

void PathEnsemble::write_json_sidecar(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out << "{\n  \"seed\": " << seed << ",\n  \"h\": " << h << ",\n  \"n\": " << n
        << ",\n  \"scheme\": \"" << scheme << "\"\n}\n";
}

// ---------------------------------------------------------------------------
// Density estimation
// ---------------------------------------------------------------------------

DensityField estimate_density(const PathEnsemble& ensemble, const Grid& grid) {
    if (ensemble.terminal.empty()) throw Error("estimate_density: empty ensemble");
    // Quantile-coverage precondition.
    const int d = ensemble.terminal.front().d;
    for (int ax = 0; ax < d; ++ax) {
        std::vector<double> c;
        c.reserve(ensemble.terminal.size());
        for (const Vec& v : ensemble.terminal) c.push_back(v[ax]);
        std::sort(c.begin(), c.end());
        const double qlo = c[static_cast<size_t>(0.005 * (c.size() - 1))];
        const double qhi = c[static_cast<size_t>(0.995 * (c.size() - 1))];
        if (qlo < grid.lo[static_cast<size_t>(ax)] - 1e-12 ||
            qhi > grid.hi[static_cast<size_t>(ax)] + 1e-12)
            throw Error("estimate_density: grid does not cover the 0.5%-99.5% quantile box");
    }
    DensityField f;
    f.grid = grid;
    f.values.assign(static_cast<size_t>(grid.size()), 0.0);
    const double h0 = grid.h(0);
    const double h1 = d == 2 ? grid.h(1) : 1.0;
    std::vector<long> counts(static_cast<size_t>(grid.size()), 0);
    for (const Vec& v : ensemble.terminal) {
        const long i = std::lround((v[0] - grid.lo[0]) / h0);
        if (i < 0 || i >= grid.n[0]) continue;
        long idx = i;
        if (d == 2) {
            const long j = std::lround((v[1] - grid.lo[1]) / h1);
            if (j < 0 || j >= grid.n[1]) continue;
            idx = i * grid.n[1] + j;
        }
        ++counts[static_cast<size_t>(idx)];
    }
    const double cell = h0 * (d == 2 ? h1 : 1.0);
    const double norm = 1.0 / (static_cast<double>(ensemble.terminal.size()) * cell);
    for (size_t k = 0; k < counts.size(); ++k)
        f.values[k] = static_cast<double>(counts[k]) * norm;
    f.provenance = "MC histogram, scheme=" + ensemble.scheme;
    return f;
}

// ---------------------------------------------------------------------------
// Renewal identity check
// ---------------------------------------------------------------------------

std::string RenewalReport::to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\n  \"lambda_tail\": " << lambda_tail
       << ",\n  \"sup_discrepancy\": " << sup_discrepancy
       << ",\n  \"l1_discrepancy\": " << l1_discrepancy << ",\n  \"l1_left\": " << l1_left
       << ",\n  \"near_diagonal_mass\": " << near_diagonal_mass << "\n}\n";
    return os.str();
}

RenewalReport renewal_check(const ModelSpec& model, double q, double t, const Grid& grid,
                            const Vec& x0, const std::vector<double>& p_left, long n_mc,
                            uint64_t seed) {
    if (model.d != 1) throw Error("renewal_check: implemented for d=1");
    if (static_cast<long>(p_left.size()) != grid.size())
        throw Error("renewal_check: left side does not match the grid");
    RenewalReport rep;
    const double lam = mu_tail_mass(model, x0, q);
    rep.lambda_tail = lam;
    const double a = model.alpha_at(x0);

    // Truncated model spec: same mu with the tail removed.
    ModelSpec trunc = model;
    PerturbationKernel pk;
    pk.kind = PerturbationKernel::Kind::MuTail;
    pk.mu_tail_q = q;
    pk.eps_nu = 0.5 * model.alpha_min;
    trunc.nu = pk;

    const long n = grid.size();
    const double h_step = t / 120.0;

    // s-quadrature nodes on [0, t].
    std::vector<double> sn, sw;
    for (int i = 0; i < 5; ++i) {
        sn.push_back(t * (0.5 + 0.5 * GL10::x[static_cast<size_t>(i)]));
        sw.push_back(t * 0.5 * GL10::w[static_cast<size_t>(i)]);
        sn.push_back(t * (0.5 - 0.5 * GL10::x[static_cast<size_t>(i)]));
        sw.push_back(t * 0.5 * GL10::w[static_cast<size_t>(i)]);
    }

    // Right side accumulated on the grid.
    std::vector<double> right(static_cast<size_t>(n), 0.0);

    // e^{-lam t} p^trunc_t(x0, .)
    {
        PathEnsemble pt = simulate_paths_truncated(trunc, x0, t, h_step, n_mc, seed, q);
        DensityField hist = estimate_density(pt, grid);
        for (long i = 0; i < n; ++i)
            right[static_cast<size_t>(i)] += std::exp(-lam * t) * hist.values[static_cast<size_t>(i)];
    }

    const SphericalMeasure sig = model.sigma_at(x0);
    const double lam_x = model.lambda_at(x0);
    for (size_t si = 0; si < sn.size(); ++si) {
        const double s = sn[si];
        // histograms from independent seeds per quadrature node
        PathEnsemble ptr = simulate_paths_truncated(trunc, Vec(0.0), s, h_step, n_mc,
                                                    seed + 1000 + si, q);
        PathEnsemble pfull =
            simulate_paths(model, Vec(0.0), std::max(t - s, h_step), h_step, n_mc,
                           seed + 2000 + si);
        DensityField htr = estimate_density(ptr, grid);
        DensityField hfull = estimate_density(pfull, grid);

        // T_s(w) = Y^tail p^trunc_s centered at w: sum_i lam w_i
        //          int_q^inf p^trunc_s(w - rho l_i) rho^{-1-a} drho
        std::vector<double> Ts(static_cast<size_t>(n), 0.0);
        for (long iy = 0; iy < n; ++iy) {
            const double w = grid.node(iy)[0];
            double acc = 0.0;
            for (size_t k = 0; k < sig.size(); ++k) {
                const double l = sig.dirs[k][0];
                double rho = q;
                const double R = std::abs(w) + (grid.hi[0] - grid.lo[0]) + q + 1.0;
                while (rho < R) {
                    const double b = std::min(R, 2.0 * rho);
                    const int sub = std::max(1, static_cast<int>((b - rho) / grid.h(0) / 4.0));
                    acc += lam_x * sig.weights[k] *
                           composite_gauss(
                               [&](double r) {
                                   Vec arg(w - r * l);
                                   return cubic_interp(grid, htr.values, arg) *
                                          std::pow(r, -1.0 - a);
                               },
                               rho, b, std::min(sub, 64));
                    rho = b;
                }
            }
            Ts[static_cast<size_t>(iy)] = acc;
        }
        // (p_{t-s} * T_s)(x0, y) = sum_z p_{t-s}(z - x0) T_s(y - z) dz
        const double wt = lam * std::exp(-lam * s) * sw[si];
        for (long iy = 0; iy < n; ++iy) {
            const double y = grid.node(iy)[0];
            double acc = 0.0;
            for (long iz = 0; iz < n; ++iz) {
                const double z = grid.node(iz)[0];
                const double pf = cubic_interp(grid, hfull.values, Vec(z - x0[0]));
                if (pf == 0.0) continue;
                Vec arg(y - z);
                acc += grid.trapezoid_weight(iz) * pf * cubic_interp(grid, Ts, arg);
            }
            right[static_cast<size_t>(iy)] += wt * acc;
        }
    }

    double sup = 0.0, l1 = 0.0, l1_left = 0.0, near = 0.0;
    const double rball = std::pow(t, 1.0 / a);
    for (long i = 0; i < n; ++i) {
        const double diff = p_left[static_cast<size_t>(i)] - right[static_cast<size_t>(i)];
        sup = std::max(sup, std::abs(diff));
        l1 += grid.trapezoid_weight(i) * std::abs(diff);
        l1_left += grid.trapezoid_weight(i) * std::abs(p_left[static_cast<size_t>(i)]);
        if (std::abs(grid.node(i)[0] - x0[0]) <= rball)
            near += grid.trapezoid_weight(i) * p_left[static_cast<size_t>(i)];
    }
    rep.sup_discrepancy = sup;
    rep.l1_discrepancy = l1;
    rep.l1_left = l1_left;
    rep.near_diagonal_mass = near;
    return rep;
}

} // namespace stablekit
