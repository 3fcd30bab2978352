#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>

#include "sr4/errors.hpp"
#include "sr4/singular.hpp"
#include "test_frames.hpp"

using namespace sr4;

namespace {

// Divergence oracle: central differences of the field components.
double divergence_fd(const VectorField4& X, const Vec4& x, double h = 1e-5) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) {
        Vec4 xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        d += (X.c[i].eval(xp) - X.c[i].eval(xm)) / (2 * h);
    }
    return d;
}

// A = x1, B = b(x1): the line field is b''(x1) X^2, whose zero set is the
// slab where b'' vanishes and coincides with H^c.
Frame slab_frame(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Frame f;
    f.A = Poly4::variable(0);
    double c3 = 0.0;
    while (std::abs(c3) < 0.2) c3 = u(rng);
    const double c2 = 0.5 * u(rng);
    f.B = Poly4::monomial({3, 0, 0, 0}, c3) + Poly4::monomial({2, 0, 0, 0}, c2) +
          Poly4::monomial({1, 0, 0, 0}, u(rng));
    f.box.half = Vec4::Constant(2.0);
    return f;
}

}  // namespace

TEST_CASE("line field coefficients") {
    SUBCASE("engel: alpha = (0, 1), X = X^2") {
        const SingularField sf = line_field(engel_frame());
        CHECK(sf.alpha1.is_zero());
        CHECK(sf.alpha2 == Poly4::constant(1.0));
        CHECK(sf.X.c[0].is_zero());
        CHECK(sf.X.c[1] == Poly4::constant(1.0));
        CHECK(sf.X.c[2] == Poly4::variable(0));
        CHECK(sf.X.c[3] == Poly4::monomial({2, 0, 0, 0}, 0.5));
        CHECK(sf.divX.is_zero());
    }
    SUBCASE("cubic: alpha = (0, x1), zero set is H^c") {
        const Frame f = cubic_frame();
        const SingularField sf = line_field(f);
        CHECK(sf.alpha1.is_zero());
        CHECK(sf.alpha2 == Poly4::variable(0));
        const BracketSet bs = brackets(f);
        std::mt19937_64 rng(2);
        for (int s = 0; s < 100; ++s) {
            Vec4 x = f.box.sample(rng);
            x[0] = 0.0;  // a zero of X
            CHECK(sf.g_norm(x) == 0.0);
            CHECK(hc_membership(bs, x));
        }
    }
    SUBCASE("frame degenerate at bracket order 3 gives X = 0") {
        Frame f;
        f.A = Poly4::variable(0);
        f.B = Poly4::variable(0).scaled(2.0);  // E = F = 0, A11 = B11 = 0
        f.box.half = Vec4::Constant(1.0);
        const SingularField sf = line_field(f);
        CHECK(sf.X.is_zero());
        CHECK(sf.alpha1.is_zero());
        CHECK(sf.alpha2.is_zero());
    }
    SUBCASE("degenerate frame propagates") {
        Frame f;
        f.A = Poly4::variable(1);
        f.box.half = Vec4::Constant(1.0);
        CHECK_THROWS_AS(line_field(f), DegenerateFrame);
    }
}

TEST_CASE("zero set consistency on random frames") {
    std::mt19937_64 rng(5);
    int slab_hits = 0;
    for (int s = 0; s < 100; ++s) {
        const bool structured = (s % 2 == 0);
        const Frame f = structured ? slab_frame(rng) : random_cubic_frame(rng);
        const SingularField sf = line_field(f);
        const BracketSet bs = brackets(f);
        const double scale = 1.0 + std::max(sf.alpha1.sup_bound(f.box),
                                            sf.alpha2.sup_bound(f.box));
        for (int q = 0; q < 40; ++q) {
            Vec4 x = f.box.sample(rng);
            if (structured) {
                // Place half the samples on the slab where b'' vanishes.
                const Poly4 b2 = f.B.partial(0).partial(0);
                const double c1 = b2.partial(0).eval(Vec4::Zero());
                const double c0 = b2.eval(Vec4::Zero());
                if (q % 2 == 0 && std::abs(c0 / c1) < 2.0) x[0] = -c0 / c1;
            }
            const bool zero = sf.g_norm(x) <= 1e-10 * scale;
            const bool in_hc = hc_membership(bs, x);
            if (zero) {
                CHECK(in_hc);
                ++slab_hits;
            }
            if (in_hc) CHECK(sf.g_norm(x) <= 1e-8 * scale);
        }
    }
    CHECK(slab_hits > 100);  // the structured families exercised real zeros
}

TEST_CASE("kernel property of (alpha1, alpha2)") {
    std::mt19937_64 rng(7);
    for (int s = 0; s < 30; ++s) {
        const Frame f = random_cubic_frame(rng);
        const SingularField sf = line_field(f);
        const BracketSet bs = brackets(f);
        for (int q = 0; q < 10; ++q) {
            const Vec4 x = f.box.sample(rng);
            if (hc_membership(bs, x)) continue;
            const Vec4 ann = annihilator(bs, x);
            const double b11 = ann.dot(bs.br11.eval(x));
            const double b12 = ann.dot(bs.br12.eval(x));
            const double res = sf.alpha1.eval(x) * b11 + sf.alpha2.eval(x) * b12;
            const double scale = std::max(1.0, sf.g_norm(x) * std::hypot(b11, b12));
            CHECK(std::abs(res) <= 1e-9 * scale);
        }
    }
}

TEST_CASE("divergence routes agree") {
    SUBCASE("engel and cubic are divergence free") {
        std::mt19937_64 rng(11);
        for (const Frame& f : {engel_frame(), cubic_frame()}) {
            const SingularField sf = line_field(f);
            for (int s = 0; s < 20; ++s) {
                const Vec4 x = f.box.sample(rng);
                const DivergenceValue dv = divergence(sf, x);
                CHECK(dv.value == 0.0);
                CHECK(std::abs(dv.closed_form) < 1e-12);
                CHECK(std::abs(divergence_fd(sf.X, x)) < 1e-6);
            }
        }
    }
    SUBCASE("zero field") {
        Frame f;
        f.A = Poly4::variable(0);
        f.B = Poly4::variable(0).scaled(2.0);
        f.box.half = Vec4::Constant(1.0);
        const SingularField sf = line_field(f);
        CHECK(divergence(sf, Vec4(0.3, 0.1, -0.2, 0.4)).value == 0.0);
    }
    SUBCASE("three routes on unit-box random frames") {
        std::mt19937_64 rng(13);
        for (int s = 0; s < 25; ++s) {
            const Frame f = random_cubic_frame(rng, 1.0);
            const SingularField sf = line_field(f);
            for (int q = 0; q < 40; ++q) {
                const Vec4 x = f.box.sample(rng);
                const DivergenceValue dv = divergence(sf, x);
                CHECK(std::abs(dv.value - dv.closed_form) <=
                      1e-9 * std::max(1.0, std::abs(dv.value)));
                CHECK(std::abs(dv.value - divergence_fd(sf.X, x)) < 1e-6);
            }
        }
    }
    SUBCASE("negdiv frame has a strictly negative region") {
        const SingularField sf = line_field(negdiv_frame());
        // div X = 2 x1 (1 + x3)
        const DivergenceValue dv = divergence(sf, Vec4(-0.4, 0, 0, 0));
        CHECK(dv.value == doctest::Approx(-0.8).epsilon(1e-12));
    }
}

TEST_CASE("divergence bound") {
    SUBCASE("divergence-free frames get C = 0") {
        CHECK(line_field(engel_frame()).C_bound == 0.0);
        CHECK(line_field(cubic_frame()).C_bound == 0.0);
    }
    SUBCASE("A = x1+2, B = x1^2 x2 has div X = 0") {
        Frame f;
        f.A = Poly4::variable(0) + Poly4::constant(2.0);
        f.B = Poly4::monomial({2, 1, 0, 0}, 1.0);
        f.box.half = Vec4::Constant(1.0);
        const SingularField sf = line_field(f);
        CHECK(sf.divX.is_zero());
        CHECK(sf.C_bound == 0.0);
    }
    SUBCASE("audit holds on random points") {
        std::mt19937_64 rng(17);
        for (const Frame& f : {negdiv_frame(), random_cubic_frame(rng)}) {
            const SingularField sf = line_field(f);
            const double C = divergence_bound(sf);
            for (int s = 0; s < 2000; ++s) {
                const Vec4 x = f.box.sample(rng);
                CHECK(sf.divX.eval(x) + C * sf.g_norm(x) >= -1e-10);
            }
        }
    }
}

TEST_CASE("flows") {
    SUBCASE("engel from the origin moves along x2 exactly") {
        const SingularField sf = line_field(engel_frame());
        const FlowPath path = flow(sf, Vec4::Zero(), +1, 1.0, 32);
        REQUIRE(!path.truncated);
        for (std::size_t k = 0; k < path.points.size(); ++k) {
            const Vec4 expect(0.0, path.times[k], 0.0, 0.0);
            CHECK((path.points[k] - expect).norm() == 0.0);
        }
    }
    SUBCASE("engel from (1,0,0,0) reaches (1,1,1,1/2)") {
        const SingularField sf = line_field(engel_frame());
        const FlowPath path = flow(sf, Vec4(1, 0, 0, 0), +1, 1.0, 64);
        REQUIRE(!path.truncated);
        CHECK((path.points.back() - Vec4(1, 1, 1, 0.5)).norm() < 1e-12);
    }
    SUBCASE("cubic equilibrium at the origin") {
        const SingularField sf = line_field(cubic_frame());
        const FlowPath path = flow(sf, Vec4::Zero(), +1, 1.0, 16);
        CHECK((path.points.back() - Vec4::Zero()).norm() == 0.0);
    }
    SUBCASE("start outside the box throws") {
        const SingularField sf = line_field(engel_frame());
        CHECK_THROWS_AS(flow(sf, Vec4(5, 0, 0, 0), +1, 1.0, 16), LeftDomain);
    }
    SUBCASE("leaving the box truncates with the exit time") {
        const SingularField sf = line_field(engel_frame());
        const FlowPath path = flow(sf, Vec4(0, 1.5, 0, 0), +1, 2.0, 64);
        CHECK(path.truncated);
        CHECK(path.t_exit > 0.0);
        CHECK(path.points.back()[1] <= 2.0);
    }
    SUBCASE("order-4 step convergence") {
        const SingularField sf = line_field(negdiv_frame());
        const Vec4 x0(-0.35, -1.0, 0.2, 0.1);
        const auto endpoint = [&](int steps) {
            const FlowPath p = flow(sf, x0, +1, 1.0, steps);
            REQUIRE(!p.truncated);
            return p.points.back();
        };
        const double e1 = (endpoint(8) - endpoint(16)).norm();
        const double e2 = (endpoint(16) - endpoint(32)).norm();
        CHECK(e1 > 1e-12);  // errors resolved above roundoff
        CHECK(e2 <= e1 / 16.0 * 1.5);
    }
    SUBCASE("flow composition") {
        const SingularField sf = line_field(negdiv_frame());
        const Vec4 x0(-0.3, -1.0, 0.1, 0.0);
        const FlowPath full = flow(sf, x0, +1, 1.0, 256);
        const FlowPath first = flow(sf, x0, +1, 0.5, 128);
        const FlowPath second = flow(sf, first.points.back(), +1, 0.5, 128);
        CHECK((second.points.back() - full.points.back()).norm() < 1e-8);
    }
}

TEST_CASE("adjoint certificates") {
    const SingularField sf = line_field(engel_frame());
    SUBCASE("engel along the x2 axis: p = (0,0,0,1)") {
        const FlowPath path = flow(sf, Vec4::Zero(), +1, 1.0, 10);
        const AdjointPath adj = adjoint_certificate(sf.frame, path);
        for (const Vec4& p : adj.p) {
            CHECK((p - Vec4(0, 0, 0, 1)).norm() == 0.0);
        }
    }
    SUBCASE("engel along (1,t,t,t/2): p = (0, 1/2, -1, 1)") {
        const FlowPath path = flow(sf, Vec4(1, 0, 0, 0), +1, 1.0, 10);
        const AdjointPath adj = adjoint_certificate(sf.frame, path);
        for (const Vec4& p : adj.p) {
            CHECK((p - Vec4(0, 0.5, -1, 1)).norm() < 1e-12);
        }
    }
    SUBCASE("p4 is always one") {
        std::mt19937_64 rng(23);
        const Frame f = random_cubic_frame(rng);
        const SingularField rsf = line_field(f);
        const FlowPath path = flow(rsf, f.box.sample(rng) * 0.5, +1, 0.1, 10);
        const AdjointPath adj = adjoint_certificate(f, path);
        for (const Vec4& p : adj.p) CHECK(p[3] == 1.0);
    }
}

TEST_CASE("singularity verification") {
    SUBCASE("engel flow certifies at 1e-10") {
        const SingularField sf = line_field(engel_frame());
        const FlowPath path = flow(sf, Vec4(1, 0, 0, 0), +1, 1.0, 10);
        const AdjointPath adj = adjoint_certificate(sf.frame, path);
        const SingularityReport rep = verify_singularity(sf.frame, path, adj, 1e-10);
        CHECK(rep.is_line_field_flow);
        CHECK(rep.max_res_x1 == 0.0);
        CHECK(rep.max_res_x2 < 1e-14);
        CHECK(rep.max_res_bracket < 1e-14);
        CHECK(rep.max_res_order3 < 1e-14);
        CHECK(rep.max_res_ode < 1e-10);
    }
    SUBCASE("cubic equilibrium: zero control, zero residuals") {
        const SingularField sf = line_field(cubic_frame());
        const FlowPath path = flow(sf, Vec4::Zero(), +1, 1.0, 10);
        const AdjointPath adj = adjoint_certificate(sf.frame, path);
        const SingularityReport rep = verify_singularity(sf.frame, path, adj, 1e-10);
        CHECK(rep.max_res_order3 == 0.0);
    }
    SUBCASE("a regular direction is rejected") {
        // The X^1 flow from the origin with the constant covector (0,0,0,1):
        // p.[X^1,[X^1,X^2]] = 1, so the order-3 equation fails.
        const Frame f = engel_frame();
        FlowPath path;
        path.sign = +1;
        for (int k = 0; k <= 10; ++k) {
            path.times.push_back(0.1 * k);
            path.points.push_back(Vec4(0.1 * k, 0, 0, 0));
        }
        AdjointPath adj;
        adj.times = path.times;
        adj.p.assign(path.points.size(), Vec4(0, 0, 0, 1));
        CHECK_THROWS_AS(verify_singularity(f, path, adj, 1e-8), CertificateFailed);
        try {
            verify_singularity(f, path, adj, 1e-8);
        } catch (const CertificateFailed& e) {
            CHECK(!e.quantity.empty());
        }
    }
    SUBCASE("random frames certify along their flows") {
        std::mt19937_64 rng(29);
        for (int s = 0; s < 10; ++s) {
            const Frame f = random_cubic_frame(rng);
            const SingularField sf = line_field(f);
            const Vec4 x0 = 0.5 * f.box.sample(rng);
            const double T = 0.1;
            const FlowPath path = flow(sf, x0, (s % 2) ? +1 : -1, T, 10);
            if (path.points.size() < 3) continue;
            const AdjointPath adj = adjoint_certificate(f, path);
            const SingularityReport rep = verify_singularity(f, path, adj, 1e-8);
            CHECK(rep.is_line_field_flow);
        }
    }
}

TEST_CASE("flow csv dump") {
    const SingularField sf = line_field(engel_frame());
    const FlowPath path = flow(sf, Vec4(1, 0, 0, 0), +1, 1.0, 4);
    const AdjointPath adj = adjoint_certificate(sf.frame, path);
    const SingularityReport rep = verify_singularity(sf.frame, path, adj, 1e-8);
    std::ostringstream os;
    write_flow_csv(os, path, adj, rep);
    const std::string text = os.str();
    CHECK(text.find("t,x1,x2,x3,x4,p1,p2,p3,p4,res_X1,res_X2,res_bracket") == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);  // header + 5 nodes
}
