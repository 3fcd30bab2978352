#include "sr4/lp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sr4::lp {

namespace {

constexpr double kEps = 1e-11;

using Eigen::VectorXd;

// Recursive core: constraints are processed in the given order; when one is
// violated the optimum lies on its hyperplane and the problem is reduced by
// eliminating the variable with the largest coefficient.
LpResult solve(const VectorXd& c, const std::vector<Halfspace>& hs, const VectorXd& lo,
               const VectorXd& hi) {
    const int d = static_cast<int>(c.size());

    if (d == 1) {
        double L = lo[0], U = hi[0];
        for (const Halfspace& h : hs) {
            const double a = h.a[0];
            if (std::abs(a) <= kEps) {
                if (h.b < -kEps) return {};  // 0 <= b violated
                continue;
            }
            if (a > 0) U = std::min(U, h.b / a);
            else L = std::max(L, h.b / a);
        }
        if (L > U + kEps) return {};
        LpResult r;
        r.feasible = true;
        r.w = VectorXd::Constant(1, c[0] >= 0 ? U : L);
        return r;
    }

    VectorXd w(d);
    for (int i = 0; i < d; ++i) w[i] = c[i] >= 0 ? hi[i] : lo[i];

    for (std::size_t n = 0; n < hs.size(); ++n) {
        const Halfspace& h = hs[n];
        if (h.a.dot(w) <= h.b + kEps * (1.0 + std::abs(h.b))) continue;

        // Optimum of the first n+1 constraints lies on a.w = b. Substitute
        // w_k = (b - sum_{j!=k} a_j w_j) / a_k.
        int k = 0;
        h.a.cwiseAbs().maxCoeff(&k);
        const double ak = h.a[k];
        if (std::abs(ak) <= kEps) return {};

        auto reduce_vec = [&](const VectorXd& v) {
            VectorXd r(d - 1);
            int t = 0;
            for (int j = 0; j < d; ++j) {
                if (j == k) continue;
                r[t++] = v[j];
            }
            return r;
        };

        // Objective: c.w = c_k (b - sum a_j w_j)/a_k + sum c_j w_j.
        VectorXd c_red = reduce_vec(c) - (c[k] / ak) * reduce_vec(h.a);

        std::vector<Halfspace> hs_red;
        hs_red.reserve(n + 2);
        auto project = [&](const VectorXd& a, double b) {
            // a.w <= b with w_k substituted.
            VectorXd a_red = reduce_vec(a) - (a[k] / ak) * reduce_vec(h.a);
            const double b_red = b - a[k] * h.b / ak;
            hs_red.push_back({std::move(a_red), b_red});
        };
        for (std::size_t j = 0; j < n; ++j) project(hs[j].a, hs[j].b);
        // Box bounds on the eliminated variable become two constraints.
        {
            VectorXd ek = VectorXd::Zero(d);
            ek[k] = 1.0;
            project(ek, hi[k]);
            project(-ek, -lo[k]);
        }

        const LpResult sub = solve(c_red, hs_red, reduce_vec(lo), reduce_vec(hi));
        if (!sub.feasible) return {};

        int t = 0;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) {
            if (j == k) continue;
            w[j] = sub.w[t++];
            dot += h.a[j] * w[j];
        }
        w[k] = (h.b - dot) / ak;
    }

    LpResult r;
    r.feasible = true;
    r.w = w;
    return r;
}

}  // namespace

LpResult seidel_maximize(const Eigen::VectorXd& c, std::vector<Halfspace> halfspaces,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         std::uint64_t seed) {
    // Normalize rows for scale-free tolerance checks.
    for (Halfspace& h : halfspaces) {
        const double n = h.a.norm();
        if (n > 0) {
            h.a /= n;
            h.b /= n;
        }
    }
    std::mt19937_64 rng(seed);
    std::shuffle(halfspaces.begin(), halfspaces.end(), rng);
    return solve(c, halfspaces, lo, hi);
}

}  // namespace sr4::lp
