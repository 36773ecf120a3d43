#include "stablekit/spherical.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace stablekit {

namespace {
double smoothstep(double u) {
    u = std::min(1.0, std::max(0.0, u));
    return u * u * (3.0 - 2.0 * u);
}
} // namespace

Mat2 RotationMap::at(const Vec& x) const {
    if (kind == Kind::None) return Mat2::identity();
    const double r = x.norm();
    if (r <= r_inner || r == 0.0) return Mat2::identity();
    const double phi = std::atan2(x.d > 1 ? x[1] : 0.0, x[0]);
    if (r >= r_outer) return Mat2::rotation(phi);
    const double w = smoothstep((r - r_inner) / (r_outer - r_inner));
    return Mat2::rotation(w * phi);
}

void SphericalMeasure::validate() const {
    if (dirs.size() != weights.size() || dirs.empty())
        throw Error("spherical measure: empty or mismatched atom lists");
    double sum = 0.0;
    for (size_t i = 0; i < dirs.size(); ++i) {
        if (weights[i] < 0.0)
            throw Error("spherical measure: negative weight");
        sum += weights[i];
        if (std::abs(dirs[i].norm() - 1.0) > 1e-12)
            throw Error("spherical measure: direction is not a unit vector");
        if (dirs[i].d != d)
            throw DimensionError("spherical measure: direction dimension mismatch");
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw Error("spherical measure: weights sum to " + std::to_string(sum) +
                    ", expected 1");
}

SphericalMeasure SphericalMeasure::at(const Vec& x) const {
    if (!rotation.active()) return *this;
    SphericalMeasure out = *this;
    const Mat2 R = rotation.at(x);
    for (auto& l : out.dirs) l = R.apply(l);
    out.rotation = RotationMap{};
    return out;
}

bool SphericalMeasure::is_symmetric() const {
    for (size_t i = 0; i < dirs.size(); ++i) {
        bool found = false;
        for (size_t j = 0; j < dirs.size(); ++j) {
            if ((dirs[i] + dirs[j]).norm() < 1e-12 &&
                std::abs(weights[i] - weights[j]) < 1e-12) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

SphericalMeasure symmetric_pair_1d() {
    SphericalMeasure m;
    m.d = 1;
    m.dirs = {Vec(1.0), Vec(-1.0)};
    m.weights = {0.5, 0.5};
    return m;
}

SphericalMeasure single_atom_1d(double sign) {
    SphericalMeasure m;
    m.d = 1;
    m.dirs = {Vec(sign >= 0 ? 1.0 : -1.0)};
    m.weights = {1.0};
    return m;
}

SphericalMeasure cross_2d() {
    SphericalMeasure m;
    m.d = 2;
    m.dirs = {Vec(1.0, 0.0), Vec(-1.0, 0.0), Vec(0.0, 1.0), Vec(0.0, -1.0)};
    m.weights = {0.25, 0.25, 0.25, 0.25};
    return m;
}

// ---------------------------------------------------------------------------
// Transportation simplex (MODI) on small dense problems.
// ---------------------------------------------------------------------------

namespace {

struct Simplex {
    int m, n;
    std::vector<double> a, b;          // supplies, demands (balanced)
    std::vector<double> cost;          // m*n
    std::vector<double> flow;          // m*n, meaningful on basic arcs
    std::vector<char> basic;           // m*n

    double c(int i, int j) const { return cost[static_cast<size_t>(i) * n + j]; }
    double& f(int i, int j) { return flow[static_cast<size_t>(i) * n + j]; }
    char& bas(int i, int j) { return basic[static_cast<size_t>(i) * n + j]; }

    void northwest_init() {
        int i = 0, j = 0;
        std::vector<double> ra = a, rb = b;
        while (i < m && j < n) {
            const double q = std::min(ra[i], rb[j]);
            f(i, j) = q;
            bas(i, j) = 1;
            ra[i] -= q;
            rb[j] -= q;
            // On simultaneous exhaustion advance only one index so the basis
            // keeps exactly m+n-1 arcs (zero-flow arcs allowed).
            if (i == m - 1 && j == n - 1) break;
            if (ra[i] <= rb[j] && i < m - 1)
                ++i;
            else if (j < n - 1)
                ++j;
            else
                ++i;
        }
    }

    void potentials(std::vector<double>& u, std::vector<double>& v) const {
        u.assign(m, 0.0);
        v.assign(n, 0.0);
        std::vector<char> udone(m, 0), vdone(n, 0);
        udone[0] = 1;
        std::deque<int> queue{0};  // rows 0..m-1, cols m..m+n-1
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node < m) {
                for (int j = 0; j < n; ++j)
                    if (basic[static_cast<size_t>(node) * n + j] && !vdone[j]) {
                        v[j] = cost[static_cast<size_t>(node) * n + j] - u[node];
                        vdone[j] = 1;
                        queue.push_back(m + j);
                    }
            } else {
                const int j = node - m;
                for (int i = 0; i < m; ++i)
                    if (basic[static_cast<size_t>(i) * n + j] && !udone[i]) {
                        u[i] = cost[static_cast<size_t>(i) * n + j] - v[j];
                        udone[i] = 1;
                        queue.push_back(i);
                    }
            }
        }
    }

    // Finds the unique cycle created by adding arc (si, sj) to the basis tree.
    // Returns the alternating arc list starting with (si,sj) as a '+' arc.
    bool find_cycle(int si, int sj, std::vector<std::pair<int, int>>& cyc) const {
        // Path in the basis tree from column sj back to row si.
        const int N = m + n;
        std::vector<int> prev(N, -2);
        std::deque<int> queue;
        prev[m + sj] = -1;
        queue.push_back(m + sj);
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node == si) break;
            if (node < m) {
                for (int j = 0; j < n; ++j)
                    if (basic[static_cast<size_t>(node) * n + j] && prev[m + j] == -2) {
                        prev[m + j] = node;
                        queue.push_back(m + j);
                    }
            } else {
                const int j = node - m;
                for (int i = 0; i < m; ++i)
                    if (basic[static_cast<size_t>(i) * n + j] && prev[i] == -2) {
                        prev[i] = m + j;
                        queue.push_back(i);
                    }
            }
        }
        if (prev[si] == -2) return false;
        cyc.clear();
        cyc.emplace_back(si, sj);
        int node = si;
        while (prev[node] != -1) {
            const int par = prev[node];
            if (node < m)
                cyc.emplace_back(node, par - m);
            else
                cyc.emplace_back(par, node - m);
            node = par;
        }
        return true;
    }

    double solve() {
        northwest_init();
        std::vector<double> u, v;
        std::vector<std::pair<int, int>> cyc;
        const int max_iters = 200 * (m + n) * (m + n) + 1000;
        for (int iter = 0; iter < max_iters; ++iter) {
            potentials(u, v);
            int si = -1, sj = -1;
            double best = -1e-13;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    if (bas(i, j)) continue;
                    const double r = c(i, j) - u[i] - v[j];
                    if (r < best) {
                        best = r;
                        si = i;
                        sj = j;
                    }
                }
            if (si < 0) break;
            if (!find_cycle(si, sj, cyc))
                throw NumericalError("transportation simplex: disconnected basis");
            // Odd positions in cyc are '-' arcs.
            double theta = 1e300;
            size_t leave = 0;
            for (size_t k = 1; k < cyc.size(); k += 2) {
                const double fk = f(cyc[k].first, cyc[k].second);
                if (fk < theta) {
                    theta = fk;
                    leave = k;
                }
            }
            for (size_t k = 0; k < cyc.size(); ++k) {
                double& fk = f(cyc[k].first, cyc[k].second);
                fk += (k % 2 == 0) ? theta : -theta;
            }
            bas(si, sj) = 1;
            bas(cyc[leave].first, cyc[leave].second) = 0;
            f(cyc[leave].first, cyc[leave].second) = 0.0;
        }
        double total = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                if (bas(i, j)) total += f(i, j) * c(i, j);
        return total;
    }
};

} // namespace

double transport_cost(const std::vector<Vec>& p_pts, const std::vector<double>& p_w,
                      const std::vector<Vec>& q_pts, const std::vector<double>& q_w) {
    Simplex s;
    s.m = static_cast<int>(p_pts.size());
    s.n = static_cast<int>(q_pts.size());
    if (s.m == 0 || s.n == 0) throw Error("transport_cost: empty measure");
    s.a = p_w;
    s.b = q_w;
    // Rebalance tiny rounding mismatch onto the last demand.
    double sa = 0.0, sb = 0.0;
    for (double w : s.a) sa += w;
    for (double w : s.b) sb += w;
    if (std::abs(sa - sb) > 1e-9)
        throw Error("transport_cost: unbalanced measures");
    s.b[static_cast<size_t>(s.n) - 1] += sa - sb;
    s.cost.resize(static_cast<size_t>(s.m) * s.n);
    for (int i = 0; i < s.m; ++i)
        for (int j = 0; j < s.n; ++j)
            s.cost[static_cast<size_t>(i) * s.n + j] = (p_pts[i] - q_pts[j]).norm();
    s.flow.assign(s.cost.size(), 0.0);
    s.basic.assign(s.cost.size(), 0);
    return s.solve();
}

double w1_sphere(const SphericalMeasure& P, const SphericalMeasure& Q) {
    if (P.d != Q.d)
        throw DimensionError("w1_sphere: measures have different dimensions");
    return transport_cost(P.dirs, P.weights, Q.dirs, Q.weights);
}

} // namespace stablekit
