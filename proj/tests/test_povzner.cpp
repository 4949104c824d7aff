#include "catch_amalgamated.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>

#include "kinetics/povzner.hpp"
#include "kinetics/random.hpp"

using namespace kinetics;
using Catch::Approx;

namespace {

Vec3 random_vec(Philox4x32& g, double scale) { return scale * Vec3{g.normal(), g.normal(), g.normal()}; }

Vec3 random_unit(Philox4x32& g) { return normalized(random_vec(g, 1.0)); }

// 2 pi int_0^{pi/2} b_n (1 - cos theta) sin theta d theta, with the capped part in closed form.
double linear_oracle_integral(const CutoffAngularKernel<>& bn, double s, double K) {
    const double tc = bn.theta_cap();
    const double capped = bn.n() * ((1.0 - std::cos(tc)) - 0.5 * std::sin(tc) * std::sin(tc));
    boost::math::quadrature::tanh_sinh<double> ts;
    const double tail =
        ts.integrate([&](double t) { return K * std::pow(t, -1.0 - 2.0 * s) * (1.0 - std::cos(t)); }, tc,
                     std::numbers::pi / 2.0);
    return 2.0 * std::numbers::pi * (capped + tail);
}

}  // namespace

TEST_CASE("linear surrogate against the one-dimensional oracle") {
    const double s = 0.25, K = 1.0;
    for (double n : {4.0, 16.0}) {
        const CutoffAngularKernel<> bn(AngularKernel(s, K), n);
        const double I = linear_oracle_integral(bn, s, K);
        Philox4x32 g(3, static_cast<std::uint64_t>(n));
        for (double e : {0.3, 0.5, 0.8}) {
            const Restitution r(e);
            for (int i = 0; i < 5; ++i) {
                const VelocityPair p{random_vec(g, 2.0), random_vec(g, 1.0)};
                const double expected = -(1.0 - e * e) * norm2(p.v_minus()) / 4.0 * I;
                const auto lin = WeightFunction::linear();
                CHECK(k_direct(p, lin, bn, r).value == Approx(expected).epsilon(1e-8));
                CHECK(k_transformed(p, lin, bn, r).value == Approx(expected).epsilon(1e-8));
                CHECK(expected < 0.0);
            }
        }
    }
}

TEST_CASE("trivial zeros") {
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 4.0);
    const VelocityPair p{{1.0, 0.5, -0.2}, {-0.3, 0.4, 0.9}};
    SECTION("elastic linear bracket vanishes") {
        const Restitution r(1.0);
        CHECK(k_direct(p, WeightFunction::linear(), bn, r).value == Approx(0.0).margin(1e-12));
        CHECK(k_transformed(p, WeightFunction::linear(), bn, r).value == Approx(0.0).margin(1e-12));
    }
    SECTION("v = v*") {
        const VelocityPair same{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
        const WeightFunction w(WeightKind::psi2, 1.0);
        CHECK(k_direct(same, w, bn, Restitution(0.5)).value == 0.0);
        CHECK(k_transformed(same, w, bn, Restitution(0.5)).value == 0.0);
    }
}

TEST_CASE("route agreement and decomposition identity") {
    Philox4x32 g(11, 0);
    const double es[] = {0.3, 0.5, 0.8, 1.0};
    const double kappas[] = {0.5, 1.0, 3.0};
    double worst_route = 0.0, worst_id = 0.0;
    for (int i = 0; i < 48; ++i) {
        const Restitution r(es[i % 4]);
        const double kappa = kappas[(i / 4) % 3];
        const double n = (i / 12) % 2 ? 16.0 : 4.0;
        const WeightFunction w((i / 24) % 2 ? WeightKind::psi2 : WeightKind::psi1, kappa);
        const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), n);
        const double scale = std::pow(10.0, 2.0 * g.uniform() - 1.0);
        const VelocityPair p{random_vec(g, scale), random_vec(g, scale)};
        const auto kd = k_direct(p, w, bn, r);
        const auto kt = k_transformed(p, w, bn, r);
        const auto hg = hg_decompose(p, w, bn, r);
        const double denom = std::max(1.0, std::abs(kd.value));
        worst_route = std::max(worst_route, std::abs(kd.value - kt.value) / denom);
        worst_id = std::max(worst_id, std::abs(hg.h() + hg.g.value - kt.value) / denom);
        CHECK(hg.g.value >= -hg.g.error);
    }
    CHECK(worst_route <= 1e-9);
    CHECK(worst_id <= 1e-9);
}

TEST_CASE("elastic chart reduces to the identity") {
    const Restitution r(1.0);
    CHECK(B_lower(r) == 0.0);
    for (double B : {0.1, 0.5, 0.9}) {
        CHECK(lambda_of_chi(B, r) == Approx(1.0).epsilon(1e-15));
        CHECK(dA_dB(B, r) == Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("orthogonal equal-speed pair") {
    Philox4x32 g(5, 0);
    for (double e : {0.3, 0.8}) {
        const Restitution r(e);
        const VelocityPair p{{1.5, 0.0, 0.0}, {0.0, 1.5, 0.0}};
        const double S = norm2(p.v) + norm2(p.v_star);
        for (int i = 0; i < 20; ++i) {
            Vec3 sigma = random_unit(g);
            const auto c = build_chart(p, sigma, r);
            const double l2 = c.lambda * c.lambda;
            CHECK(c.Y * c.Y - c.Z * c.Z == Approx(S * S * (1 - l2) * (1 - l2) / 16.0).margin(1e-12));
        }
    }
}

TEST_CASE("g vanishes as kappa -> 0") {
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 4.0);
    const VelocityPair p{{1.0, 0.2, 0.0}, {-0.4, 0.9, 0.3}};
    const Restitution r(0.5);
    double prev = HUGE_VAL;
    for (double k : {0.5, 0.05, 0.005}) {
        const auto hg = hg_decompose(p, WeightFunction(WeightKind::psi2, k), bn, r);
        CHECK(hg.g.value >= 0.0);
        CHECK(hg.g.value < prev);
        prev = hg.g.value;
    }
    CHECK(prev < 1e-2 * hg_decompose(p, WeightFunction(WeightKind::psi2, 0.5), bn, r).g.value);
}

TEST_CASE("one particle at rest") {
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 16.0);
    const VelocityPair p{{2.0, -1.0, 0.5}, {0.0, 0.0, 0.0}};
    for (double e : {0.5, 1.0})
        for (auto kind : {WeightKind::psi1, WeightKind::psi2}) {
            const auto hg = hg_decompose(p, WeightFunction(kind, 1.0), bn, Restitution(e));
            CHECK(hg.h() <= 0.0);
            CHECK(hg.g.value == 0.0);
            CHECK(bound_shapes(p, WeightFunction(kind, 1.0)).D == 0.0);
        }
}

TEST_CASE("psi1 bracket is homogeneous of degree 2 + kappa") {
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 4.0);
    const Restitution r(0.5);
    const Vec3 a = normalized(Vec3{1.0, 0.3, -0.2}), b = normalized(Vec3{-0.5, 1.0, 0.4});
    for (double kappa : {0.5, 1.0, 3.0}) {
        const WeightFunction w(WeightKind::psi1, kappa);
        std::vector<double> x, y;
        for (double R : {10.0, 100.0, 1000.0}) {
            const auto hg = hg_decompose(VelocityPair{R * a, R * b}, w, bn, r);
            REQUIRE(hg.h() < 0.0);
            x.push_back(std::log(R));
            y.push_back(std::log(-hg.h()));
        }
        const double slope = (y.back() - y.front()) / (x.back() - x.front());
        CHECK(std::abs(slope - (2.0 + kappa)) < 0.1);
    }
}

TEST_CASE("fitted constants") {
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), 4.0);
    Philox4x32 g(17, 0);
    auto make_cell = [&](double e, double kappa, WeightKind kind, int dirs) {
        std::vector<PovznerPoint> cell;
        const WeightFunction w(kind, kappa);
        const Restitution r(e);
        for (double a : {0.1, 1.0, 10.0})
            for (int i = 0; i < dirs; ++i) {
                PovznerPoint p;
                p.pair = VelocityPair{a * random_unit(g), std::pow(10.0, 2.0 * g.uniform() - 1.0) * random_unit(g)};
                p.e = e;
                p.kappa = kappa;
                p.kind = kind;
                const auto hg = hg_decompose(p.pair, w, bn, r);
                p.h1 = hg.h1.value;
                p.h2 = hg.h2.value;
                p.g = hg.g.value;
                p.k_transformed = k_transformed(p.pair, w, bn, r).value;
                cell.push_back(p);
            }
        return cell;
    };
    SECTION("elastic cell is feasible and every margin is nonnegative") {
        for (auto kind : {WeightKind::psi1, WeightKind::psi2}) {
            const auto cell = make_cell(1.0, 1.0, kind, 6);
            const auto c = fit_constants(cell);
            REQUIRE(c.feasible);
            CHECK(std::isfinite(c.C1));
            CHECK(c.C1 > 0.0);
            for (const auto& p : cell) {
                const WeightFunction w(kind, 1.0);
                CHECK(check_H_bound(p.pair, w, p.h(), c.C1, c.C2) >= -1e-12 * std::abs(p.h()));
                CHECK(check_G_bound(p.pair, w, p.g, c.C34) >= -1e-12 * std::abs(p.g));
            }
        }
    }
    SECTION("enlarging the grid never shrinks C2 or C34") {
        auto cell = make_cell(0.5, 3.0, WeightKind::psi2, 4);
        const auto small = fit_constants(cell);
        const auto extra = make_cell(0.5, 3.0, WeightKind::psi2, 4);
        cell.insert(cell.end(), extra.begin(), extra.end());
        const auto big = fit_constants(cell);
        CHECK(big.C2 >= small.C2);
        CHECK(big.C34 >= small.C34);
    }
    SECTION("bound branch switches at kappa = 2") {
        const VelocityPair p{{2.0, 0.0, 0.0}, {0.0, 3.0, 0.0}};
        CHECK(bound_shapes(p, WeightFunction(WeightKind::psi2, 1.999)).D == Approx(36.0));
        CHECK(bound_shapes(p, WeightFunction(WeightKind::psi2, 2.0)).D == Approx(9.0 * 5.0 + 4.0 * 10.0));
    }
    SECTION("nonpositive constants are rejected") {
        const VelocityPair p{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
        CHECK_THROWS_AS(check_H_bound(p, WeightFunction(WeightKind::psi1, 1.0), 0.0, 0.0, 1.0), DomainError);
        CHECK_THROWS_AS(check_G_bound(p, WeightFunction(WeightKind::psi1, 1.0), 0.0, -1.0), DomainError);
    }
}
