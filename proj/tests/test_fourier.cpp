#include "catch_amalgamated.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "kinetics/fourier.hpp"

using namespace kinetics;
using boost::math::quadrature::gauss_kronrod;

namespace {

constexpr double pi = std::numbers::pi;

CharFuncSample gaussian_sample(double T, const std::vector<Vec3>& grid) {
    CharFuncSample s{grid, {}};
    for (const auto& x : grid) s.values.emplace_back(std::exp(-0.5 * T * dot(x, x)), 0.0);
    return s;
}

// Radial form of the Bobylev right side for an isotropic Gaussian of temperature T, centred.
// With u = (v + v*)/2 and w = v - v*, the zeta integral reduces to
//   J(c) = int Phi_n(g) sinc(g c) 4 pi g^2 (4 pi T)^-3/2 exp(-g^2 / 4T) dg,
// evaluated at c = |xi| |a- xhat + a+ sigma| / 2 against c = |xi| / 2.
double gaussian_rhs_oracle(const CutoffAngularKernel<>& bn, const MollifiedKineticKernel& phin,
                           const Restitution& r, double T, double xn) {
    const double n = phin.n();
    auto J = [&](double c) {
        auto f = [&](double g) {
            const double x = g * c;
            const double sc = x < 1e-8 ? 1.0 : std::sin(x) / x;
            return phin(g) * sc * 4 * pi * g * g * std::pow(4 * pi * T, -1.5) * std::exp(-g * g / (4 * T));
        };
        return gauss_kronrod<double, 61>::integrate(f, 0, n, 15, 1e-14) +
               gauss_kronrod<double, 61>::integrate(f, n, 2 * n, 15, 1e-14);
    };
    const double J0 = J(xn / 2);
    auto f = [&](double th) {
        const double c = xn * std::sqrt(r.a_minus * r.a_minus + r.a_plus * r.a_plus +
                                        2 * r.a_minus * r.a_plus * std::cos(th)) / 2;
        return bn.bn_sin(th) * (J(c) - J0);
    };
    const auto edges = bn.theta_edges();
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        s += gauss_kronrod<double, 31>::integrate(f, edges[i], edges[i + 1], 10, 1e-13);
    return std::exp(-T * xn * xn / 4) * 2 * pi * s;
}

}  // namespace

TEST_CASE("empirical characteristic function") {
    const auto grid = default_xi_grid();
    REQUIRE(grid.size() == 1 + 3 * 26);
    CHECK(norm(grid[0]) == 0.0);

    SECTION("dirac at the origin") {
        ParticleEnsemble ens;
        ens.v.assign(7, Vec3{});
        const auto s = empirical_cf(ens, grid);
        for (const auto& v : s.values) CHECK(std::abs(v - cplx(1, 0)) < 1e-15);
    }
    SECTION("symmetric pair gives a cosine") {
        ParticleEnsemble ens;
        const Vec3 v0{0.3, -1.2, 0.7};
        ens.v = {v0, -v0};
        const auto s = empirical_cf(ens, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(s.values[i].real() == Catch::Approx(std::cos(dot(v0, grid[i]))).margin(1e-14));
            CHECK(std::abs(s.values[i].imag()) < 1e-14);
        }
    }
    SECTION("single particle phase convention") {
        ParticleEnsemble ens;
        ens.v = {Vec3{1, 0, 0}};
        const auto s = empirical_cf(ens, {Vec3{0.5, 0, 0}});
        CHECK(std::abs(s.values[0] - std::exp(cplx(0, -0.5))) < 1e-15);
    }
    SECTION("maxwellian ensemble") {
        SimConfig c;
        c.N = 100000;
        c.n = 4.0;
        c.t_final = 0.0;
        c.seed = 5;
        const auto ens = init_ensemble(c);
        const auto s = empirical_cf(ens, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(std::abs(s.values[i] - std::exp(-0.5 * dot(grid[i], grid[i]))) < 5.0 / std::sqrt(1e5));
    }
    SECTION("node invariants hold exactly") {
        SimConfig c;
        c.N = 4999;
        c.n = 4.0;
        c.t_final = 0.0;
        c.init.kind = InitialKind::power_tail;
        const auto s = empirical_cf(init_ensemble(c), grid);
        CHECK(s.values[0] == cplx(1, 0));
        std::size_t mirrored = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(std::abs(s.values[i]) <= 1.0 + 1e-12);
            for (std::size_t j = 0; j < grid.size(); ++j)
                if (i != j && grid[j] == -grid[i]) {
                    ++mirrored;
                    CHECK(s.values[j] == std::conj(s.values[i]));
                }
        }
        CHECK(mirrored == grid.size() - 1);
    }
    SECTION("errors") {
        ParticleEnsemble ens;
        CHECK_THROWS_AS(empirical_cf(ens, grid), DomainError);
        ens.v = {Vec3{}};
        CHECK_THROWS_AS(empirical_cf(ens, {}), DomainError);
    }
}

TEST_CASE("K_alpha distance") {
    const auto grid = default_xi_grid();
    const auto g1 = gaussian_sample(1.0, grid);
    const auto g2 = gaussian_sample(2.0, grid);
    const auto g3 = gaussian_sample(0.5, grid);
    const auto dirac = gaussian_sample(0.0, grid);

    CHECK(kalpha_distance(g1, g1, 2.0).value == 0.0);
    // (1 - exp(-r^2/2)) / r^2 decreases in r, so the inner shell attains the sup
    const auto d = kalpha_distance(g1, dirac, 2.0);
    CHECK(d.value == Catch::Approx((1 - std::exp(-0.125)) / 0.25).epsilon(1e-13));
    CHECK(norm(d.argmax_xi) == Catch::Approx(0.5));
    // at alpha = 1 the sup moves outward
    auto f1 = [](double r) { return (1 - std::exp(-r * r / 2)) / r; };
    CHECK(kalpha_distance(g1, dirac, 1.0).value ==
          Catch::Approx(std::max({f1(0.5), f1(1.0), f1(2.0)})).epsilon(1e-13));

    // on nodes with |xi| >= 1 the distance cannot grow with alpha
    std::vector<Vec3> outer(grid.begin() + 27, grid.end());
    const auto o1 = gaussian_sample(1.0, outer), o2 = gaussian_sample(0.3, outer);
    double prev = HUGE_VAL;
    for (double a = 0.1; a <= 2.0; a += 0.1) {
        const double v = kalpha_distance(o1, o2, a).value;
        CHECK(v <= prev);
        prev = v;
    }

    for (double a : {0.5, 1.0, 2.0}) {
        const double d12 = kalpha_distance(g1, g2, a).value;
        CHECK(d12 == Catch::Approx(kalpha_distance(g2, g1, a).value));
        CHECK(d12 <= kalpha_distance(g1, g3, a).value + kalpha_distance(g3, g2, a).value + 1e-15);
    }

    CHECK_THROWS_AS(kalpha_distance(g1, g1, 0.0), DomainError);
    CHECK_THROWS_AS(kalpha_distance(g1, g1, 2.5), DomainError);
    auto shorter = gaussian_sample(1.0, std::vector<Vec3>(grid.begin(), grid.end() - 1));
    CHECK_THROWS_AS(kalpha_distance(g1, shorter, 2.0), DomainError);
    auto moved = g1;
    moved.xi_grid[3] = 1.01 * moved.xi_grid[3];
    CHECK_THROWS_AS(kalpha_distance(g1, moved, 2.0), DomainError);
}

TEST_CASE("equicontinuity diagnostic") {
    const auto grid = default_xi_grid();
    const auto g1 = gaussian_sample(1.0, grid);
    const auto g2 = gaussian_sample(0.9, grid);
    CHECK(equicontinuity_diagnostic({g1, g1, g1}, {0.0, 0.5, 1.0}).modulus == 0.0);
    const auto r = equicontinuity_diagnostic({g1, g1, g2}, {0.0, 0.5, 0.75});
    CHECK(r.interval == 1);
    double expect = 0.0;
    for (const auto& x : grid) {
        const double s2 = dot(x, x);
        expect = std::max(expect, (std::exp(-0.45 * s2) - std::exp(-0.5 * s2)) / 0.25);
    }
    CHECK(r.modulus == Catch::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(equicontinuity_diagnostic({g1}, {0.0}), DomainError);
    CHECK_THROWS_AS(equicontinuity_diagnostic({g1, g2}, {1.0, 1.0}), DomainError);
}

TEST_CASE("time modulus along DSMC runs") {
    const auto grid = default_xi_grid();
    auto modulus = [&](double e, double n) {
        SimConfig c;
        c.e = e;
        c.n = n;
        c.N = 20000;
        c.t_final = 0.5;
        c.output_dt = 0.1;
        c.seed = 3;
        c.snapshot_times = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
        std::vector<CharFuncSample> s;
        std::vector<double> t;
        run(c, [&](const ParticleEnsemble& ens) {
            s.push_back(empirical_cf(ens, grid));
            t.push_back(ens.time);
        });
        REQUIRE(s.size() == 6);
        return equicontinuity_diagnostic(s, t).modulus;
    };
    // elastic equilibrium: only sampling noise, |d phi| ~ 1/sqrt(N) per output interval
    CHECK(modulus(1.0, 8.0) < 5.0 / std::sqrt(20000.0) / 0.1);
    std::vector<double> m;
    for (double n : {4.0, 8.0, 16.0}) m.push_back(modulus(0.5, n));
    INFO("moduli " << m[0] << " " << m[1] << " " << m[2]);
    CHECK(*std::max_element(m.begin(), m.end()) <= 2.0 * *std::min_element(m.begin(), m.end()));
}

TEST_CASE("Fourier transform of the mollified kernel") {
    for (double gamma : {0.5, 1.0, 2.0}) {
        const MollifiedKineticKernel k(gamma, 8.0);
        // zeta = 0 is the plain integral
        auto f = [&](double r) { return 4 * pi * r * r * k(r); };
        const double mass = gauss_kronrod<double, 61>::integrate(f, 0, 8, 15, 1e-14) +
                            gauss_kronrod<double, 61>::integrate(f, 8, 16, 15, 1e-14);
        const auto r0 = phi_hat_n_detail(k, 0.0);
        CHECK(r0.value == Catch::Approx(mass).epsilon(1e-10));
        CHECK(phi_hat_n(k, 1e-6) == Catch::Approx(mass).epsilon(1e-9));

        // a brute-force route at moderate zeta
        for (double z : {0.3, 2.0, 7.5}) {
            auto g = [&](double r) { return 4 * pi * r * r * k(r) * std::sin(r * z) / (r * z); };
            double brute = 0.0;
            for (int p = 0; p < 64; ++p)
                brute += gauss_kronrod<double, 61>::integrate(g, p * 0.25, (p + 1) * 0.25, 10, 1e-14);
            const auto d = phi_hat_n_detail(k, z);
            CHECK(d.value == Catch::Approx(brute).margin(1e-9 * mass));
            CHECK(d.error < 1e-8 * mass);
        }
        CHECK_THROWS_AS(phi_hat_n(k, 0.0), DomainError);
        CHECK_THROWS_AS(phi_hat_n_detail(k, -1.0), DomainError);
    }

    SECTION("far field matches the corner asymptotics") {
        for (double gamma : {0.5, 1.0}) {
            const MollifiedKineticKernel k(gamma, 8.0);
            const double z = 1e3;
            const double ratio = phi_hat_n(k, z) * std::pow(z, 3 + gamma) / phi_hat_asymptotic_constant(gamma);
            CHECK(ratio == Catch::Approx(1.0).epsilon(0.01));
        }
        CHECK(std::abs(phi_hat_asymptotic_constant(2.0)) < 1e-12);
        CHECK(phi_hat_asymptotic_constant(1.0) == Catch::Approx(-8 * pi));
    }

    SECTION("decay report") {
        for (double gamma : {0.5, 1.0, 2.0}) {
            const auto rep = lemma25_decay(MollifiedKineticKernel(gamma, 8.0), 0.1, 1e3, 60);
            INFO("gamma " << gamma << " head " << rep.head_max << " tail " << rep.tail_max);
            CHECK(rep.all_finite);
            CHECK(rep.bounded());
            CHECK(rep.zeta.size() == 60);
            CHECK(rep.fitted_constant >= rep.asymptotic_constant * 0.99);
        }
        CHECK_THROWS_AS(lemma25_decay(MollifiedKineticKernel(1.0, 8.0), 1.0, 0.5), DomainError);
    }
}

TEST_CASE("gaussian surrogate") {
    SimConfig c;
    c.N = 200000;
    c.n = 4.0;
    c.t_final = 0.0;
    c.seed = 11;
    c.init.T = 1.5;
    const auto g = fit_gaussian(init_ensemble(c));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(g.cov[i][j] - (i == j ? 1.5 : 0.0)) < 0.02);
    CHECK(norm(g.mean) < 1e-12);  // the loader removes the mean
    CHECK(g.lambda_min() > 1.4);

    GaussianModel m = GaussianModel::isotropic(2.0);
    m.mean = Vec3{1, 0, 0};
    const Vec3 x{0.5, 0.2, -0.1};
    CHECK(std::abs(m(x) - std::exp(cplx(-dot(x, x), -0.5))) < 1e-15);
    CHECK(m.decay_radius(1.0) == Catch::Approx(1.0 + std::sqrt(18.0)));
}

TEST_CASE("Bobylev right side") {
    const double n = 8.0;
    const Restitution rest(0.8);
    const CutoffAngularKernel<> bn(AngularKernel(0.25, 1.0), n);
    const MollifiedKineticKernel phin(1.0, n);
    const auto phi = GaussianModel::isotropic(1.0);
    const BobylevKernels<> kern(bn, phin, phi.decay_radius(1.5));

    SECTION("importance table is consistent") {
        const auto& t = kern.table;
        double prev = 0.0, s = 0.0;
        for (std::size_t k = 0; k < t.r.size(); ++k) {
            s += (t.cdf[k] - prev) * t.weight[k];
            prev = t.cdf[k];
        }
        CHECK(s == Catch::Approx(t.S).epsilon(1e-10));
        CHECK(t.sample(0.0) == 0);
        CHECK(t.sample(1.0) == t.r.size() - 1);
    }

    SECTION("vanishes at the origin") {
        const auto est = bobylev_rhs(phi, Vec3{}, kern, rest);
        CHECK(est.value == cplx(0, 0));
    }

    SECTION("agrees with the radial oracle") {
        BobylevOptions opt;
        opt.seed = 21;
        opt.batches = 32;
        for (double xn : {0.5, 1.5}) {
            const auto est = bobylev_rhs(phi, Vec3{0.6 * xn, 0.0, 0.8 * xn}, kern, rest, opt);
            const double oracle = gaussian_rhs_oracle(bn, phin, rest, 1.0, xn);
            INFO("|xi| " << xn << " mc " << est.value.real() << " +- " << est.stderr_re << " oracle " << oracle);
            CHECK(std::abs(est.value.real() - oracle) < 4.0 * est.stderr_re);
            CHECK(est.stderr_re < 0.1 * std::abs(oracle));
            CHECK(est.value.imag() == 0.0);
            CHECK_FALSE(est.flagged);
        }
    }

    SECTION("a shifted mean only changes the phase") {
        BobylevOptions opt;
        opt.batches = 4;
        opt.samples_per_batch = 200;
        GaussianModel shifted = phi;
        shifted.mean = Vec3{0.4, -0.3, 1.0};
        const Vec3 xi{0.2, 0.9, -0.5};
        const auto a = bobylev_rhs(phi, xi, kern, rest, opt);
        const auto b = bobylev_rhs(shifted, xi, kern, rest, opt);
        CHECK(std::abs(b.value - std::exp(cplx(0, -dot(shifted.mean, xi))) * a.value) < 1e-12);
    }

    SECTION("elastic maxwellian is stationary") {
        const Restitution elastic(1.0);
        BobylevOptions opt;
        opt.batches = 16;
        const auto est = bobylev_rhs(phi, Vec3{0, 1.0, 0}, kern, elastic, opt);
        CHECK(std::abs(est.value.real()) < 4.0 * est.stderr_re);
        CHECK(gaussian_rhs_oracle(bn, phin, elastic, 1.0, 1.0) == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("flagging and errors") {
        BobylevOptions opt;
        opt.batches = 4;
        opt.samples_per_batch = 50;
        opt.max_stderr = 1e-9;
        CHECK(bobylev_rhs(phi, Vec3{0, 0, 1}, kern, rest, opt).flagged);
        opt.batches = 1;
        CHECK_THROWS_AS(bobylev_rhs(phi, Vec3{0, 0, 1}, kern, rest, opt), DomainError);
    }
}
