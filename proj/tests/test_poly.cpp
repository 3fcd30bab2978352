#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "sr4/poly.hpp"

using namespace sr4;

namespace {

Poly4 random_poly(std::mt19937_64& rng, int max_degree = 3) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Poly4 p;
    for (int e0 = 0; e0 <= max_degree; ++e0)
        for (int e1 = 0; e1 + e0 <= max_degree; ++e1)
            for (int e2 = 0; e2 + e1 + e0 <= max_degree; ++e2)
                for (int e3 = 0; e3 + e2 + e1 + e0 <= max_degree; ++e3)
                    p.add_term({e0, e1, e2, e3}, u(rng));
    return p;
}

}  // namespace

TEST_CASE("monomial evaluation") {
    const Poly4 p = Poly4::monomial({2, 0, 0, 0}, 1.0);  // x1^2
    CHECK(p.eval(Vec4(2, 0, 0, 0)) == 4.0);

    const Poly4 zero;
    CHECK(zero.eval(Vec4(1, 2, 3, 4)) == 0.0);

    const Poly4 cubic = Poly4::monomial({3, 0, 0, 0}, 1.0 / 6.0);  // x1^3/6
    CHECK(cubic.eval(Vec4(1, 1, 1, 1)) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("formal partials") {
    const Poly4 half_sq = Poly4::monomial({2, 0, 0, 0}, 0.5);  // x1^2/2
    CHECK(half_sq.partial(0) == Poly4::variable(0));

    CHECK(Poly4::variable(0).partial(2).is_zero());

    const Poly4 cubic = Poly4::monomial({3, 0, 0, 0}, 1.0 / 6.0);
    CHECK(cubic.partial(0) == Poly4::monomial({2, 0, 0, 0}, 0.5));
}

TEST_CASE("partials commute exactly") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Poly4 p = random_poly(rng, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                CHECK(p.partial(i).partial(j) == p.partial(j).partial(i));
    }
}

TEST_CASE("ring operations against pointwise arithmetic") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Poly4 a = random_poly(rng), b = random_poly(rng);
        const Vec4 x(u(rng), u(rng), u(rng), u(rng));
        CHECK((a + b).eval(x) == doctest::Approx(a.eval(x) + b.eval(x)).epsilon(1e-12));
        CHECK((a - b).eval(x) == doctest::Approx(a.eval(x) - b.eval(x)).epsilon(1e-12));
        CHECK((a * b).eval(x) == doctest::Approx(a.eval(x) * b.eval(x)).epsilon(1e-12));
        CHECK(a.scaled(2.5).eval(x) == doctest::Approx(2.5 * a.eval(x)).epsilon(1e-12));
    }
}

TEST_CASE("no zero terms survive arithmetic") {
    std::mt19937_64 rng(3);
    const Poly4 a = random_poly(rng);
    CHECK((a - a).is_zero());
    CHECK(a.scaled(0.0).is_zero());
    Poly4 p;
    p.add_term({1, 0, 0, 0}, 1.0);
    p.add_term({1, 0, 0, 0}, -1.0);
    CHECK(p.is_zero());
    CHECK(p.terms().empty());
}

TEST_CASE("sup bound dominates samples") {
    std::mt19937_64 rng(5);
    DomainBox box;
    box.center = Vec4(0.3, -0.2, 0.1, 0.0);
    box.half = Vec4(1.0, 0.5, 2.0, 0.7);
    for (int trial = 0; trial < 10; ++trial) {
        const Poly4 p = random_poly(rng);
        const double bound = p.sup_bound(box);
        for (int s = 0; s < 200; ++s) {
            CHECK(std::abs(p.eval(box.sample(rng))) <= bound + 1e-12);
        }
    }
}

TEST_CASE("printing") {
    Poly4 p;
    p.add_term({2, 0, 0, 0}, 1.0);
    p.add_term({0, 1, 0, 1}, -0.5);
    CHECK(p.to_string() == "-0.5*x2*x4 + x1^2");
    CHECK(Poly4().to_string() == "0");
}
