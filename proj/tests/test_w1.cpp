#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stablekit/spherical.hpp"

using namespace stablekit;

namespace {

// Brute-force oracle: enumerate every basic feasible solution (spanning tree
// of the bipartite transport graph), solve the tree flow, keep the cheapest
// feasible one.
double w1_enumerate(const SphericalMeasure& P, const SphericalMeasure& Q) {
    const int m = static_cast<int>(P.size()), n = static_cast<int>(Q.size());
    const int arcs = m * n;
    const int basis = m + n - 1;
    std::vector<int> pick(static_cast<size_t>(basis));
    double best = 1e300;

    std::vector<int> comb;
    comb.reserve(static_cast<size_t>(basis));
    // iterate over all arc subsets of size m+n-1
    std::vector<int> idx(static_cast<size_t>(basis));
    for (int i = 0; i < basis; ++i) idx[static_cast<size_t>(i)] = i;
    auto cost = [&](int a) {
        return (P.dirs[static_cast<size_t>(a / n)] - Q.dirs[static_cast<size_t>(a % n)]).norm();
    };
    while (true) {
        // check the subset idx forms a spanning tree and solve it
        std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(m + n));
        for (int k = 0; k < basis; ++k) {
            const int a = idx[static_cast<size_t>(k)];
            const int i = a / n, j = a % n;
            adj[static_cast<size_t>(i)].push_back({m + j, a});
            adj[static_cast<size_t>(m + j)].push_back({i, a});
        }
        // connectivity + acyclicity (m+n-1 edges connected => tree)
        std::vector<int> seen(static_cast<size_t>(m + n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int cnt = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (auto [v, a] : adj[static_cast<size_t>(u)]) {
                (void)a;
                if (!seen[static_cast<size_t>(v)]) {
                    seen[static_cast<size_t>(v)] = 1;
                    ++cnt;
                    stack.push_back(v);
                }
            }
        }
        if (cnt == m + n) {
            // peel leaves: a tree flow is uniquely determined by the balances
            std::vector<double> bal(static_cast<size_t>(m + n));
            for (int i = 0; i < m; ++i)
                bal[static_cast<size_t>(i)] = P.weights[static_cast<size_t>(i)];
            for (int j = 0; j < n; ++j)
                bal[static_cast<size_t>(m + j)] = -Q.weights[static_cast<size_t>(j)];
            std::vector<int> deg(static_cast<size_t>(m + n));
            for (int u = 0; u < m + n; ++u)
                deg[static_cast<size_t>(u)] = static_cast<int>(adj[static_cast<size_t>(u)].size());
            std::vector<char> gone_node(static_cast<size_t>(m + n), 0);
            std::vector<char> gone_arc(static_cast<size_t>(arcs), 0);
            double total = 0.0;
            bool feasible = true;
            for (int rounds = 0; rounds < m + n - 1 && feasible; ++rounds) {
                int leaf = -1;
                for (int u = 0; u < m + n; ++u)
                    if (!gone_node[static_cast<size_t>(u)] && deg[static_cast<size_t>(u)] == 1) {
                        leaf = u;
                        break;
                    }
                if (leaf < 0) break;
                int arc = -1, other = -1;
                for (auto [v, a] : adj[static_cast<size_t>(leaf)])
                    if (!gone_arc[static_cast<size_t>(a)] && !gone_node[static_cast<size_t>(v)]) {
                        arc = a;
                        other = v;
                        break;
                    }
                if (arc < 0) break;
                // source leaf ships bal, sink leaf receives -bal
                const double flow = leaf < m ? bal[static_cast<size_t>(leaf)]
                                             : -bal[static_cast<size_t>(leaf)];
                if (flow < -1e-12) feasible = false;
                total += std::max(0.0, flow) * cost(arc);
                if (leaf < m)
                    bal[static_cast<size_t>(other)] += flow;  // sink demand met
                else
                    bal[static_cast<size_t>(other)] -= flow;  // source supply used
                gone_node[static_cast<size_t>(leaf)] = 1;
                gone_arc[static_cast<size_t>(arc)] = 1;
                --deg[static_cast<size_t>(other)];
                deg[static_cast<size_t>(leaf)] = 0;
            }
            if (feasible) best = std::min(best, total);
        }
        // next combination
        int pos = basis - 1;
        while (pos >= 0 && idx[static_cast<size_t>(pos)] == arcs - basis + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<size_t>(pos)];
        for (int k = pos + 1; k < basis; ++k)
            idx[static_cast<size_t>(k)] = idx[static_cast<size_t>(k - 1)] + 1;
    }
    (void)pick;
    (void)comb;
    return best;
}

SphericalMeasure random_measure(std::mt19937& rng, int d, int atoms) {
    SphericalMeasure m;
    m.d = d;
    std::uniform_real_distribution<double> uni(0.05, 1.0);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * 3.141592653589793);
    double sum = 0.0;
    for (int i = 0; i < atoms; ++i) {
        if (d == 1) {
            m.dirs.push_back(Vec(rng() % 2 == 0 ? 1.0 : -1.0));
        } else {
            const double a = ang(rng);
            m.dirs.push_back(Vec(std::cos(a), std::sin(a)));
        }
        const double w = uni(rng);
        m.weights.push_back(w);
        sum += w;
    }
    for (auto& w : m.weights) w /= sum;
    // renormalize exactly
    double s2 = 0.0;
    for (size_t i = 0; i + 1 < m.weights.size(); ++i) s2 += m.weights[i];
    m.weights.back() = 1.0 - s2;
    return m;
}

} // namespace

TEST_CASE("w1 on identical singletons is zero") {
    SphericalMeasure p = single_atom_1d(1.0);
    CHECK(w1_sphere(p, p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("w1 between opposite singletons is the chord") {
    CHECK(w1_sphere(single_atom_1d(1.0), single_atom_1d(-1.0)) == doctest::Approx(2.0));
}

TEST_CASE("w1 half-split to singleton") {
    // transport half the mass across distance 2
    CHECK(w1_sphere(symmetric_pair_1d(), single_atom_1d(1.0)) == doctest::Approx(1.0));
}

TEST_CASE("dimension mismatch throws") {
    CHECK_THROWS_AS(w1_sphere(symmetric_pair_1d(), cross_2d()), DimensionError);
}

TEST_CASE("w1 equals exhaustive enumeration on small random measures") {
    std::mt19937 rng(777);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = trial % 2 == 0 ? 1 : 2;
        SphericalMeasure P = random_measure(rng, d, 2 + static_cast<int>(rng() % 3));
        SphericalMeasure Q = random_measure(rng, d, 2 + static_cast<int>(rng() % 3));
        const double solver = w1_sphere(P, Q);
        const double oracle = w1_enumerate(P, Q);
        CHECK(solver == doctest::Approx(oracle).epsilon(1e-10));
    }
}

TEST_CASE("w1 is a metric on sampled measures") {
    std::mt19937 rng(424242);
    for (int trial = 0; trial < 25; ++trial) {
        SphericalMeasure P = random_measure(rng, 2, 3);
        SphericalMeasure Q = random_measure(rng, 2, 4);
        SphericalMeasure R = random_measure(rng, 2, 3);
        const double pq = w1_sphere(P, Q);
        const double qp = w1_sphere(Q, P);
        const double pr = w1_sphere(P, R);
        const double rq = w1_sphere(R, Q);
        CHECK(std::abs(pq - qp) < 1e-10);                 // symmetry
        CHECK(w1_sphere(P, P) < 1e-10);                   // identity
        CHECK(pq <= pr + rq + 1e-10);                     // triangle
        CHECK(pq >= 0.0);
    }
}

TEST_CASE("Kantorovich-Rubinstein lower bound") {
    std::mt19937 rng(990);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        SphericalMeasure P = random_measure(rng, 2, 3);
        SphericalMeasure Q = random_measure(rng, 2, 4);
        const double w1 = w1_sphere(P, Q);
        // random values projected to a 1-Lipschitz function by inf-convolution
        std::vector<Vec> pts;
        for (const Vec& v : P.dirs) pts.push_back(v);
        for (const Vec& v : Q.dirs) pts.push_back(v);
        std::vector<double> g(pts.size());
        for (auto& v : g) v = uni(rng);
        std::vector<double> f(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) {
            double best = 1e300;
            for (size_t j = 0; j < pts.size(); ++j)
                best = std::min(best, g[j] + (pts[i] - pts[j]).norm());
            f[i] = best;
        }
        double ip = 0.0, iq = 0.0;
        for (size_t i = 0; i < P.size(); ++i) ip += P.weights[i] * f[i];
        for (size_t j = 0; j < Q.size(); ++j) iq += Q.weights[j] * f[P.size() + j];
        CHECK(std::abs(ip - iq) <= w1 + 1e-10);
    }
}
