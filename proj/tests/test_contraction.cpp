#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "sr4/contraction.hpp"
#include "sr4/errors.hpp"
#include "test_frames.hpp"

using namespace sr4;

namespace {

VolumeOptions quick_opts() {
    VolumeOptions o;
    o.time_points = 4;
    o.flow_steps = 64;
    o.probes = 20000;
    return o;
}

DomainBox subbox(const Vec4& center, const Vec4& half) {
    DomainBox b;
    b.center = center;
    b.half = half;
    return b;
}

}  // namespace

TEST_CASE("jacobian traces") {
    SUBCASE("engel is divergence free: J = 1 exactly") {
        const SingularField sf = line_field(engel_frame());
        const JacobianTrace tr = jacobian_trace(sf, Vec4(0.5, 0, 0, 0), +1, 1.0, 32);
        CHECK(tr.J.front() == 1.0);
        for (double j : tr.J) CHECK(j == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("zero field: J = 1") {
        Frame f;
        f.A = Poly4::variable(0);
        f.B = Poly4::variable(0).scaled(2.0);
        f.box.half = Vec4::Constant(1.0);
        const SingularField sf = line_field(f);
        const JacobianTrace tr = jacobian_trace(sf, Vec4::Zero(), +1, 1.0, 16);
        for (double j : tr.J) CHECK(j == 1.0);
    }
    SUBCASE("negdiv frame matches the scalar ODE closed form") {
        // x1 is constant along the flow and div X = 2 x1 (1 + x3(t)).
        const SingularField sf = line_field(negdiv_frame());
        const Vec4 z(-0.3, -1.0, 0.0, 0.0);
        const JacobianTrace tr = jacobian_trace(sf, z, +1, 1.0, 256);
        // Integrate the divergence along the flow independently.
        const FlowPath path = flow(sf, z, +1, 1.0, 256);
        double integral = 0.0;
        for (std::size_t k = 1; k < path.points.size(); ++k) {
            const double h = path.times[k] - path.times[k - 1];
            integral += 0.5 * h *
                        (sf.divX.eval(path.points[k - 1]) + sf.divX.eval(path.points[k]));
        }
        CHECK(tr.J.back() == doctest::Approx(std::exp(integral)).epsilon(1e-4));
        CHECK(tr.J.back() < 0.75);  // strictly contracting here
        for (double j : tr.J) CHECK(j > 0.0);
    }
}

TEST_CASE("volume evolution cross-validates the two estimators") {
    SUBCASE("engel slab keeps its volume") {
        const SingularField sf = line_field(engel_frame());
        const SampleCloud A = SampleCloud::monte_carlo(
            subbox(Vec4(0.8, -0.5, 0, 0), Vec4(0.3, 0.3, 0.3, 0.3)), 20000, 7);
        const VolumeReport rep = volume_evolution(sf, A, +1, 1.0, quick_opts());
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            CHECK(rep.vol_div[k] == doctest::Approx(rep.volA).epsilon(1e-12));
            CHECK(std::abs(rep.vol_mc[k] - rep.volA) <= 3.0 * rep.stderr_mc[k]);
        }
        contraction_audit(rep, sf.C_bound);  // must not throw
    }
    SUBCASE("cubic cloud drifts without volume change") {
        const SingularField sf = line_field(cubic_frame());
        const SampleCloud A = SampleCloud::monte_carlo(
            subbox(Vec4(0.75, -0.6, 0, 0), Vec4(0.2, 0.3, 0.3, 0.3)), 20000, 9);
        const VolumeReport rep = volume_evolution(sf, A, +1, 1.0, quick_opts());
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            CHECK(std::abs(rep.vol_div[k] - rep.vol_mc[k]) <=
                  3.0 * std::hypot(rep.stderr_mc[k], rep.stderr_div[k]) + 1e-12);
        }
    }
    SUBCASE("grid mode starts exactly at vol(A)") {
        const SingularField sf = line_field(engel_frame());
        const SampleCloud A =
            SampleCloud::grid(subbox(Vec4(0.8, -0.5, 0, 0), Vec4(0.2, 0.2, 0.2, 0.2)), 5);
        const VolumeReport rep = volume_evolution(sf, A, +1, 0.5, quick_opts());
        CHECK(rep.vol_div.front() == rep.volA);
        CHECK(rep.stderr_div.front() == 0.0);
    }
    SUBCASE("negdiv region contracts and the audit still holds") {
        const SingularField sf = line_field(negdiv_frame());
        const SampleCloud A = SampleCloud::monte_carlo(
            subbox(Vec4(-0.3, -0.6, 0, 0), Vec4(0.15, 0.3, 0.25, 0.25)), 20000, 11);
        const VolumeReport rep = volume_evolution(sf, A, +1, 1.0, quick_opts());
        CHECK(rep.vol_div.back() < 0.8 * rep.volA);  // genuine contraction
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            CHECK(std::abs(rep.vol_div[k] - rep.vol_mc[k]) <=
                  3.0 * std::hypot(rep.stderr_mc[k], rep.stderr_div[k]) + 1e-12);
        }
        contraction_audit(rep, sf.C_bound);
        // Forcing C = 0 demands non-contraction, which fails here.
        CHECK_THROWS_AS(contraction_audit(rep, 0.0), AuditFailed);
    }
}

TEST_CASE("flow composition on samples") {
    const SingularField sf = line_field(negdiv_frame());
    std::mt19937_64 rng(13);
    const DomainBox region = subbox(Vec4(-0.25, -0.8, 0, 0), Vec4(0.1, 0.2, 0.2, 0.2));
    for (int s = 0; s < 20; ++s) {
        const Vec4 z = region.sample(rng);
        const FlowPath full = flow(sf, z, +1, 0.8, 256);
        const FlowPath head = flow(sf, z, +1, 0.4, 128);
        const FlowPath tail = flow(sf, head.points.back(), +1, 0.4, 128);
        REQUIRE(!full.truncated);
        CHECK((tail.points.back() - full.points.back()).norm() <= 1e-8);
    }
}

TEST_CASE("hc attraction experiment") {
    SUBCASE("cubic slab near the degenerate set stays bounded below") {
        const SingularField sf = line_field(cubic_frame());
        const SampleCloud A = SampleCloud::monte_carlo(
            subbox(Vec4(0.5, -1.0, 0, 0), Vec4(0.1, 0.4, 0.4, 0.4)), 5000, 17);
        VolumeOptions o = quick_opts();
        o.flow_steps = 128;
        const DecayCurve curve = hc_attraction_experiment(sf, A, 2.0, o);
        CHECK(curve.bounded_below);
        for (std::size_t k = 0; k < curve.times.size(); ++k) {
            CHECK(curve.volume[k] >= curve.floor_[k] - 1e-9);
        }
    }
    SUBCASE("engel curve is constant") {
        const SingularField sf = line_field(engel_frame());
        const SampleCloud A = SampleCloud::monte_carlo(
            subbox(Vec4(0.5, -1.0, 0, 0), Vec4(0.1, 0.2, 0.2, 0.2)), 5000, 19);
        const DecayCurve curve = hc_attraction_experiment(sf, A, 1.0, quick_opts());
        for (double v : curve.volume) {
            CHECK(v == doctest::Approx(A.volume()).epsilon(1e-12));
        }
    }
    SUBCASE("zero-volume point clouds give the zero curve") {
        const SingularField sf = line_field(cubic_frame());
        SampleCloud A;
        A.base = subbox(Vec4::Zero(), Vec4::Constant(0.1));
        A.grid_mode = true;
        A.cell_volume = 0.0;
        A.samples = {Vec4::Zero(), Vec4(0.05, 0, 0, 0)};
        const DecayCurve curve = hc_attraction_experiment(sf, A, 1.0, quick_opts());
        for (double v : curve.volume) CHECK(v == 0.0);
    }
}

TEST_CASE("disjoint projection experiment") {
    const SingularField sf = line_field(engel_frame());
    // The x2 coordinate advances monotonically under X^2, so two x2-slabs
    // pull back to disjoint pieces of the cloud.
    const SampleCloud A = SampleCloud::monte_carlo(
        subbox(Vec4(0.5, -0.75, 0, 0), Vec4(0.3, 0.65, 0.3, 0.3)), 20000, 23);
    const DomainBox t1 = subbox(Vec4(0.5, 0.0, 0, 0), Vec4(2.0, 0.3, 2.0, 2.0));
    const DomainBox t2 = subbox(Vec4(0.5, 0.8, 0, 0), Vec4(2.0, 0.3, 2.0, 2.0));

    SUBCASE("identical targets are rejected") {
        CHECK_THROWS_AS(disjoint_projection_experiment(sf, A, t1, t1, 1.0, quick_opts()),
                        DegenerateSplit);
    }
    SUBCASE("classes partition and stay disjoint") {
        const SplitReport rep = disjoint_projection_experiment(sf, A, t1, t2, 1.0,
                                                               quick_opts());
        CHECK(rep.count1 > 0);
        CHECK(rep.count2 > 0);
        CHECK(rep.count1 + rep.count2 <= static_cast<int>(A.samples.size()));
        CHECK(rep.disjoint);
        CHECK(rep.bounds_hold);
        for (double g : rep.min_gap) CHECK(g > 0.0);
        for (double r : rep.union_ratio) CHECK(r <= 1.0 + 0.05);
    }
}

TEST_CASE("regular contraction audit") {
    const Frame f = engel_frame();
    const SampleCloud A = SampleCloud::monte_carlo(
        subbox(Vec4(0.4, -0.2, 0, 0), Vec4(0.2, 0.2, 0.2, 0.2)), 200, 29);
    VolumeOptions o = quick_opts();
    o.time_points = 3;

    SUBCASE("constant potential is the identity map") {
        const auto phi = [](const Vec4&) { return 1.0; };
        const RegularContractionReport rep = regular_contraction_audit(f, phi, A, 1.0, o);
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            CHECK(rep.vol_ratio[k] == doctest::Approx(1.0).epsilon(1e-6));
        }
        CHECK(rep.bound_holds);
    }
    SUBCASE("convex quadratic potential") {
        const auto phi = [](const Vec4& z) { return 0.4 * z.squaredNorm(); };
        const RegularContractionReport rep = regular_contraction_audit(f, phi, A, 1.0, o);
        CHECK(rep.hessian_lower == doctest::Approx(0.8).epsilon(1e-3));
        CHECK(rep.bound_holds);
        for (double r : rep.vol_ratio) CHECK(r > 0.5);
    }
    SUBCASE("mixed experiment reports the combined inequality") {
        const SingularField sf = line_field(f);
        const auto phi = [](const Vec4& z) { return 0.2 * z.squaredNorm(); };
        const MixedFlowReport rep = mixed_flow_experiment(sf, phi, A, 0.5, o);
        REQUIRE(!rep.times.empty());
        // Engel is divergence free, so exp(-C l) = 1 and the sum exceeds 1.
        CHECK(rep.tension_regime);
        for (std::size_t k = 0; k < rep.times.size(); ++k) {
            CHECK(rep.vol_singular[k] == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(rep.union_upper[k] >= rep.vol_regular[k]);
        }
    }
}

TEST_CASE("volume report serialization") {
    const SingularField sf = line_field(engel_frame());
    const SampleCloud A = SampleCloud::grid(
        subbox(Vec4(0.8, -0.5, 0, 0), Vec4(0.2, 0.2, 0.2, 0.2)), 3);
    VolumeOptions o = quick_opts();
    o.probes = 2000;
    const VolumeReport rep = volume_evolution(sf, A, +1, 0.5, o);
    std::ostringstream csv;
    write_volume_csv(csv, rep);
    CHECK(csv.str().find("t,vol_mc,stderr,vol_div,lower_bound,l_A_t") == 0);
    const std::string j = volume_report_json(rep, true, "engel-grid");
    CHECK(j.find("estimator_gap_sigmas") != std::string::npos);
}
