#include "catch_amalgamated.hpp"

#include <cmath>

#include "kinetics/povzner.hpp"
#include "kinetics/random.hpp"
#include "kinetics/weights.hpp"

using namespace kinetics;
using Catch::Approx;

TEST_CASE("closed forms of psi1 and psi2") {
    WeightFunction p1(WeightKind::psi1, 1.0), p2(WeightKind::psi2, 1.0);
    CHECK(p1(4.0) == Approx(8.0).epsilon(1e-15));
    CHECK(p2(3.0) == Approx(7.0).epsilon(1e-15));
    CHECK(p1(0.0) == 0.0);
    CHECK(p2(0.0) == 0.0);
    // derivatives against central differences
    for (auto kind : {WeightKind::psi1, WeightKind::psi2})
        for (double k : {0.5, 1.0, 3.0})
            for (double x : {0.3, 1.0, 7.5, 40.0}) {
                WeightFunction w(kind, k);
                const double h = 1e-5 * x;
                CHECK(w.d1(x) == Approx((w(x + h) - w(x - h)) / (2 * h)).epsilon(1e-8));
                CHECK(w.d2(x) == Approx((w.d1(x + h) - w.d1(x - h)) / (2 * h)).epsilon(1e-7));
                CHECK(w.d2(x) >= 0.0);
            }
}

TEST_CASE("truncated weight") {
    const double m = 5.0;
    WeightFunction t(WeightKind::psi_trunc, 1.5, m), r(WeightKind::psi_remainder, 1.5, m), p2(WeightKind::psi2, 1.5);
    SECTION("psi2 below m, tangent above") {
        CHECK(t(2.0) == p2(2.0));
        CHECK(t(8.0) == Approx(p2.d1(m) * (8.0 - m) + p2(m)).epsilon(1e-15));
        CHECK(t.slope() == p2.d1(m));
    }
    SECTION("C1 at m: one-sided values and slopes agree") {
        const double below = m * (1 - 1e-15), above = m * (1 + 1e-15);
        CHECK(t(below) == Approx(t(above)).epsilon(1e-13));
        CHECK(t.d1(m) == t.slope());
        CHECK(t.d1(above) == t.slope());
        CHECK(r(m) == Approx(0.0).margin(1e-12));
        CHECK(r.d1(m) == Approx(0.0).margin(1e-12));
        CHECK(r(m + 1.0) == 0.0);
        CHECK(r.d1(m + 1.0) == 0.0);
    }
    SECTION("remainder = psi_trunc - p") {
        for (double x : {0.0, 1.0, 4.9, 5.0, 6.0, 100.0}) CHECK(r(x) == Approx(t(x) - t.tangent(x)).margin(1e-12));
    }
    SECTION("convexity") {
        for (double x = 0.0; x < 12.0; x += 0.25) {
            const double a = x, b = x + 0.5;
            CHECK(t(0.5 * (a + b)) <= 0.5 * (t(a) + t(b)) + 1e-12);
            CHECK(t.d2(x) >= 0.0);
        }
    }
    SECTION("psi_{kappa,m} -> psi2 on compacts, and the remainder differs from psi2 by an affine map") {
        for (double mm : {10.0, 100.0, 1000.0}) {
            WeightFunction tt(WeightKind::psi_trunc, 1.5, mm), rr(WeightKind::psi_remainder, 1.5, mm);
            for (double x : {0.0, 1.0, 3.0, 9.0}) CHECK(tt(x) == p2(x));
            // psi2 - psi_remainder = C(m) x + psi2(m) - C(m) m on [0, m]
            const double c0 = p2(0.0) - rr(0.0);
            const double c1 = (p2(9.0) - rr(9.0) - c0) / 9.0;
            CHECK(c1 == Approx(tt.slope()).epsilon(1e-12));
            for (double x : {2.0, 5.0}) CHECK(p2(x) - rr(x) == Approx(c0 + c1 * x).epsilon(1e-12));
        }
    }
}

TEST_CASE("appendix inequalities") {
    SECTION("x = 0") {
        for (auto kind : {WeightKind::psi1, WeightKind::psi2}) {
            const WeightFunction w(kind, 1.0);
            const auto t = appendix_convexity_check(w, 0.0, 3.0);
            CHECK(t.lhs == Approx(0.0).margin(1e-15));
            CHECK(t.lower == 0.0);
            // y psi'(0) survives: zero for psi1 only
            CHECK(t.upper == Approx(w.eta(2.0) * 3.0 * w.d1(0.0)).margin(1e-15));
        }
        CHECK(appendix_convexity_check(WeightFunction(WeightKind::psi1, 1.0), 0.0, 3.0).upper == 0.0);
    }
    SECTION("quadratic case kappa = 2") {
        WeightFunction w(WeightKind::psi1, 2.0);
        CHECK(w.eta(2.0) == 2.0);
        const auto t = appendix_convexity_check(w, 1.5, 4.0);
        CHECK(t.lhs == Approx(2 * 1.5 * 4.0).epsilon(1e-14));
        CHECK(t.upper == Approx(2.0 * (1.5 * 8.0 + 4.0 * 3.0)).epsilon(1e-14));
        CHECK(t.lower == Approx(0.25 * 1.5 * 4.0 * 2.0).epsilon(1e-14));
    }
    SECTION("random sweep") {
        Philox4x32 g(21, 0);
        for (int i = 0; i < 4000; ++i) {
            const double k = std::array{0.5, 1.0, 2.0, 4.0}[i % 4];
            const double x = 1e3 * g.uniform(), y = 1e3 * g.uniform();
            for (auto kind : {WeightKind::psi1, WeightKind::psi2}) {
                const auto t = appendix_convexity_check(WeightFunction(kind, k), x, y);
                REQUIRE(t.lower <= t.lhs * (1 + 1e-12));
                REQUIRE(t.lhs <= t.upper * (1 + 1e-12));
            }
        }
    }
}
