#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "kinetics/kernels.hpp"

using namespace kinetics;
using Catch::Approx;

namespace {

// Independent closed forms for the concrete kernel: with theta_c the cap angle,
// int_0^{pi/2} b_n sin = n (1 - cos theta_c) + K (theta_c^-2s - (pi/2)^-2s) / (2s).
double cap_angle_by_bisection(double s, double K, double n) {
    auto f = [&](double t) { return K * std::pow(t, -1 - 2 * s) / std::sin(t) - n; };
    if (f(half_pi) >= 0) return half_pi;
    double lo = 1e-300, hi = half_pi;
    for (int i = 0; i < 2000 && hi - lo > 1e-17; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double mass_closed_form(double s, double K, double n) {
    const double tc = cap_angle_by_bisection(s, K, n);
    return 2 * std::numbers::pi *
           (n * (1 - std::cos(tc)) + K * (std::pow(tc, -2 * s) - std::pow(half_pi, -2 * s)) / (2 * s));
}

}  // namespace

TEST_CASE("restitution invariants") {
    for (double e : {0.3, 0.5, 0.8, 1.0}) {
        Restitution r(e);
        CHECK(r.a_plus + r.a_minus == Approx(1.0).epsilon(1e-15));
        CHECK(r.a_plus * r.a_plus - r.a_minus * r.a_minus == Approx(e).epsilon(1e-15));
    }
    CHECK(Restitution(1.0).a_minus == 0.0);
    CHECK_THROWS_AS(Restitution(1.2), DomainError);
    CHECK_THROWS_AS(Restitution(0.0), DomainError);
}

TEST_CASE("eval_b") {
    AngularKernel k(0.25, 1.0);
    CHECK(eval_b(k, half_pi) == Approx(0.507949087473927758).epsilon(1e-14));
    CHECK(eval_b(k, half_pi / 2) > eval_b(k, half_pi));
    CHECK(eval_b(AngularKernel(0.4, 0.0), 0.7) == 0.0);
    CHECK_THROWS_AS(eval_b(k, 0.0), DomainError);
    // sin(theta) b = K theta^(-1-2s)
    for (double t : {1e-6, 0.01, 0.3, 1.2}) CHECK(k.b_sin(t) == Approx(std::pow(t, -1.5)).epsilon(1e-14));
}

TEST_CASE("eval_bn caps b") {
    CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 10.0);
    CHECK(eval_bn(bn, 1e-3) == 10.0);
    CHECK(eval_bn(bn, 0.0) == 10.0);
    CHECK(eval_bn(bn, half_pi) == Approx(0.507949087473927758).epsilon(1e-14));
    CHECK(bn.theta_cap() == Approx(cap_angle_by_bisection(0.25, 1.0, 10.0)).epsilon(1e-12));
    // continuity at the cap
    const double tc = bn.theta_cap();
    CHECK(bn.bn(tc * (1 + 1e-12)) == Approx(10.0).epsilon(1e-9));
    for (double t : {0.05, 0.3, 0.9, 1.5}) {
        CHECK(eval_bn(bn, t) <= eval_b(bn.base(), t));
        CHECK(eval_bn(bn, t) <= 10.0);
        // n -> infinity recovers b
        CutoffAngularKernel<> big(AngularKernel(0.25, 1.0), 1e12);
        CHECK(big.bn(t) == eval_b(bn.base(), t));
    }
}

TEST_CASE("eval_phin") {
    MollifiedKineticKernel p(1.0, 4.0);
    CHECK(eval_phin(p, 2.0) == 2.0);
    CHECK(eval_phin(p, 10.0) == 0.0);
    // phi_c(1.5) = h(0.5)/(2 h(0.5)) = 1/2
    CHECK(eval_phin(p, 6.0) == Approx(3.0).epsilon(1e-15));
    CHECK(eval_phin(p, 5.0) > 0.0);
    CHECK(eval_phin(p, 5.0) < 5.0);
    CHECK(p.majorant() == 8.0);
    for (double g : {0.5, 1.0, 2.0}) {
        MollifiedKineticKernel q(g, 3.0);
        double prev = 1.0;
        for (double r = 0.0; r <= 7.0; r += 0.01) {
            const double v = q(r);
            CHECK(v >= 0.0);
            CHECK(v <= std::pow(r, g) + 1e-15);
            CHECK(v <= q.majorant());
            if (r >= 3.0) {
                const double pc = phi_c(r / 3.0);
                CHECK(pc <= prev + 1e-15);
                prev = pc;
            }
        }
        CHECK(q(3.0) == std::pow(3.0, g));
        CHECK(q(6.0) == 0.0);
        // continuity across both ends of the transition
        CHECK(std::abs(q(3.0 + 1e-9) - q(3.0)) < 1e-6);
        CHECK(q(6.0 - 1e-9) < 1e-12);
    }
    CHECK_THROWS_AS(KineticKernel(0.0), DomainError);
    CHECK_THROWS_AS(KineticKernel(2.5), DomainError);
}

TEST_CASE("sphere_mass_bn") {
    SECTION("constant kernel below the cap") {
        CutoffAngularKernel<ConstantAngularKernel> bn(ConstantAngularKernel(0.7), 5.0);
        CHECK(sphere_mass_bn(bn) == Approx(2 * std::numbers::pi * 0.7).epsilon(1e-13));
    }
    SECTION("power kernel against the closed form") {
        CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 1.0);
        CHECK(sphere_mass_bn(bn) == Approx(5.38707452948289285860867637711).epsilon(1e-12));
        for (double s : {0.1, 0.25, 0.45})
            for (double n : {1.0, 4.0, 16.0, 1024.0}) {
                CutoffAngularKernel<> k(AngularKernel(s, 1.3), n);
                CHECK(sphere_mass_bn(k) == Approx(mass_closed_form(s, 1.3, n)).epsilon(1e-11));
            }
    }
    SECTION("nondecreasing in n and unbounded along n = 2^k") {
        double prev = 0.0;
        for (int k = 0; k <= 12; ++k) {
            CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), std::ldexp(1.0, k));
            const double m = sphere_mass_bn(bn);
            CHECK(m > prev);
            prev = m;
        }
        // growth like n^(2s/(2+2s)) = n^0.2 with no saturation: doubling still gains ~2^0.2
        CutoffAngularKernel<> a(AngularKernel(0.25, 1.0), 2048.0), b(AngularKernel(0.25, 1.0), 4096.0);
        CHECK(sphere_mass_bn(b) / sphere_mass_bn(a) > 1.14);
    }
}

TEST_CASE("weighted_angular_integral") {
    AngularKernel k(0.25, 1.0);
    CHECK(weighted_angular_integral(k, 2.0) == Approx(0.300668209661472957850).epsilon(1e-12));
    CHECK_THROWS_AS(weighted_angular_integral(k, 0.4), DivergenceError);
    CHECK_THROWS_AS(weighted_angular_integral(k, 0.5), DivergenceError);
    double prev = weighted_angular_integral(k, 0.55);
    for (double a : {0.6, 1.0, 2.0, 3.0, 5.0}) {
        const double v = weighted_angular_integral(k, a);
        CHECK(v < prev);
        prev = v;
    }
    for (double s : {0.1, 0.25, 0.45})
        for (double a : {2.0 * s + 0.05, 1.0, 2.0}) {
            AngularKernel ks(s, 1.0);
            const double v1 = weighted_angular_integral(ks, a, 1);
            const double v2 = weighted_angular_integral(ks, a, 2);
            const double v4 = weighted_angular_integral(ks, a, 4);
            CHECK(std::abs(v2 - v1) < 1e-6 * v2);
            CHECK(std::abs(v4 - v2) < 1e-6 * v4);
        }
}
