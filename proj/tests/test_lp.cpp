#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <optional>
#include <random>

#include "sr4/lp.hpp"

using namespace sr4::lp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Brute-force LP oracle: enumerate all vertices (intersections of d
// constraint planes, including the box faces), keep the feasible ones, and
// take the best objective. Exponential, fine for d <= 3 and ~10 rows.
std::optional<VectorXd> enumerate_optimum(const VectorXd& c,
                                          const std::vector<Halfspace>& hs,
                                          const VectorXd& lo, const VectorXd& hi) {
    const int d = static_cast<int>(c.size());
    std::vector<Halfspace> all = hs;
    for (int i = 0; i < d; ++i) {
        VectorXd e = VectorXd::Zero(d);
        e[i] = 1.0;
        all.push_back({e, hi[i]});
        all.push_back({-e, -lo[i]});
    }
    const int n = static_cast<int>(all.size());
    const auto feasible = [&](const VectorXd& x) {
        for (const Halfspace& h : all) {
            if (h.a.dot(x) > h.b + 1e-7) return false;
        }
        return true;
    };

    std::optional<VectorXd> best;
    double best_val = -std::numeric_limits<double>::infinity();
    std::vector<int> idx(d);
    const std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == d) {
            MatrixXd A(d, d);
            VectorXd b(d);
            for (int i = 0; i < d; ++i) {
                A.row(i) = all[idx[i]].a.transpose();
                b[i] = all[idx[i]].b;
            }
            Eigen::FullPivLU<MatrixXd> lu(A);
            if (!lu.isInvertible()) return;
            const VectorXd x = lu.solve(b);
            if (feasible(x) && c.dot(x) > best_val) {
                best_val = c.dot(x);
                best = x;
            }
            return;
        }
        for (int i = start; i < n; ++i) {
            idx[k] = i;
            rec(i + 1, k + 1);
        }
    };
    rec(0, 0);
    return best;
}

}  // namespace

TEST_CASE("seidel agrees with vertex enumeration on random instances") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int feasible_seen = 0, infeasible_seen = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 2);  // 2 or 3
        const int rows = 3 + static_cast<int>(rng() % 8);
        VectorXd c(d), lo = VectorXd::Constant(d, -5.0), hi = VectorXd::Constant(d, 5.0);
        for (int i = 0; i < d; ++i) c[i] = gauss(rng);
        std::vector<Halfspace> hs;
        for (int r = 0; r < rows; ++r) {
            VectorXd a(d);
            for (int i = 0; i < d; ++i) a[i] = gauss(rng);
            hs.push_back({a, gauss(rng)});
        }
        const auto oracle = enumerate_optimum(c, hs, lo, hi);
        const LpResult got = seidel_maximize(c, hs, lo, hi, 1000 + trial);
        REQUIRE(got.feasible == oracle.has_value());
        if (oracle) {
            ++feasible_seen;
            CHECK(c.dot(got.w) == doctest::Approx(c.dot(*oracle)).epsilon(1e-6));
            for (const Halfspace& h : hs) {
                CHECK(h.a.dot(got.w) <= h.b + 1e-7);
            }
        } else {
            ++infeasible_seen;
        }
    }
    // The random family must exercise both outcomes.
    CHECK(feasible_seen > 50);
    CHECK(infeasible_seen > 10);
}

TEST_CASE("degenerate rows") {
    SUBCASE("zero row with negative bound is infeasible") {
        std::vector<Halfspace> hs{{VectorXd::Zero(2), -1.0}};
        const LpResult r = seidel_maximize(VectorXd::Ones(2), hs,
                                           VectorXd::Constant(2, -1.0),
                                           VectorXd::Constant(2, 1.0));
        CHECK(!r.feasible);
    }
    SUBCASE("duplicate constraints are harmless") {
        VectorXd a(2);
        a << 1.0, 1.0;
        std::vector<Halfspace> hs{{a, 1.0}, {a, 1.0}, {a, 1.0}};
        VectorXd c(2);
        c << 1.0, 1.0;
        const LpResult r = seidel_maximize(c, hs, VectorXd::Constant(2, -4.0),
                                           VectorXd::Constant(2, 4.0));
        REQUIRE(r.feasible);
        CHECK(r.w.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}
