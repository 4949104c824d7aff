#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kinetics/collision_geometry.hpp"
#include "kinetics/kernels.hpp"
#include "kinetics/quadrature.hpp"
#include "kinetics/weights.hpp"

namespace kinetics {

struct PovznerTolerances {
    double rel = 1e-10;        ///< outer (theta or B) relative tolerance
    double inner_rel = 1e-13;  ///< inner (phi or eta) relative tolerance; tighter so the outer rule sees a smooth integrand
    /// Inner tau tolerance of the G integral. Its integrand has an integrable singularity wherever
    /// |v'| = 0 for psi1 with kappa < 2, where Gauss-Kronrod cannot reach inner_rel.
    double g_inner_rel = 1e-10;
    /// Absolute floor, in units of (psi(|v|^2) + psi(|v*|^2)) * |b_n|: the brackets are differences of
    /// terms of that size, so round-off caps the attainable accuracy there.
    double abs_scale = 1e-13;
};

namespace detail {

/// Geometry of a pair that is shared by all transformed-route integrands.
struct PairGeometry {
    double gp = 0.0;  ///< |v+|
    double gm = 0.0;  ///< |v-|
    double cos_beta = 0.0;
    double sin_beta = 0.0;
    double psi_v = 0.0;  ///< psi(|v|^2) + psi(|v*|^2)
};

inline PairGeometry pair_geometry(const VelocityPair& pair, const WeightFunction& psi) {
    PairGeometry g;
    const Vec3 vp = pair.v_plus();
    const Vec3 vm = pair.v_minus();
    g.gp = norm(vp);
    g.gm = norm(vm);
    if (g.gp > 0.0 && g.gm > 0.0) {
        g.cos_beta = std::clamp(dot(vp, vm) / (g.gp * g.gm), -1.0, 1.0);
        g.sin_beta = norm(cross(vp, vm)) / (g.gp * g.gm);
        if (collision_frame(pair).degenerate) g.sin_beta = 0.0;
    }
    // With v+ = 0 the angle beta is undefined but Z = 0 makes it irrelevant.
    g.psi_v = psi(norm2(pair.v)) + psi(norm2(pair.v_star));
    return g;
}

/// Per-B quantities of the (B, eta) chart.
struct ChartAtB {
    double lambda, Y, Z, eta0, c, jac;
};

template <AngularKernelLike Base>
ChartAtB chart_at(double B, const PairGeometry& g, const CutoffAngularKernel<Base>& bn, const Restitution& r) {
    ChartAtB q;
    q.lambda = lambda_of_chi(B, r);
    q.Y = 0.25 * (g.gp * g.gp + q.lambda * q.lambda * g.gm * g.gm);
    q.Z = 0.5 * q.lambda * g.gp * g.gm;
    const double t = q.lambda * B - r.a_minus;
    q.eta0 = g.sin_beta * std::sqrt(std::max(0.0, r.a_plus * r.a_plus - t * t)) / q.lambda;
    q.c = g.cos_beta * B;
    q.jac = bn.bn_cos(theta_from_B(B, r)) * dA_dB(B, r);
    return q;
}

template <AngularKernelLike Base>
std::vector<double> b_edges(const CutoffAngularKernel<Base>& bn, const Restitution& r) {
    std::vector<double> edges;
    const auto te = bn.theta_edges();
    for (auto it = te.rbegin(); it != te.rend(); ++it) edges.push_back(B_from_theta(*it, r));
    edges.front() = B_lower(r);
    edges.back() = 1.0;
    return edges;
}

/// (sin t - t cos t), accurate near t = 0.
inline double ibp_weight(double t) {
    if (t < 1e-2) {
        const double t2 = t * t;
        return t * t2 * (1.0 / 3.0 - t2 * (1.0 / 30.0 - t2 / 840.0));
    }
    return std::sin(t) - t * std::cos(t);
}

}  // namespace detail

/// K_n^e by the standard polar route: theta in [0, pi/2] (adaptive Gauss-Kronrod on the
/// kernel's panels) and phi in [0, 2pi) (periodic trapezoid), with v', v*' from the sigma map.
template <AngularKernelLike Base>
quad::Result k_direct(const VelocityPair& pair, const WeightFunction& psi, const CutoffAngularKernel<Base>& bn,
                      const Restitution& r, PovznerTolerances tol = {}) {
    const Vec3 vm = pair.v_minus();
    const double gm = norm(vm);
    if (gm == 0.0) return {0.0, 0.0};
    const CollisionFrame f = collision_frame(pair);
    const Vec3 half = 0.5 * pair.v_plus();
    const Vec3 shift = (0.5 * r.a_minus) * vm;
    const double psi_v = psi(norm2(pair.v)) + psi(norm2(pair.v_star));
    const double floor = 1e-15 * std::max(psi_v, 1e-300);
    double inner_err = 0.0;

    auto outer = [&](double theta) {
        const double w = bn.bn_sin(theta);
        if (w == 0.0) return 0.0;
        const double ct = std::cos(theta), st = std::sin(theta);
        auto bracket = [&](double phi) {
            const Vec3 sigma = ct * f.vm_hat + (st * std::cos(phi)) * f.j + (st * std::sin(phi)) * f.h;
            const Vec3 kick = shift + (0.5 * r.a_plus * gm) * sigma;
            return psi(norm2(half + kick)) + psi(norm2(half - kick)) - psi_v;
        };
        const auto in = quad::periodic_full(bracket, tol.inner_rel, floor);
        inner_err = std::max(inner_err, in.error);
        return w * in.value;
    };
    const auto edges = bn.theta_edges();
    auto res = quad::adaptive(outer, edges, tol.rel, tol.abs_scale * psi_v * sphere_mass_bn(bn));
    res.error += inner_err * 2.0 * std::numbers::pi * sphere_mass_bn(bn);
    return res;
}

/// K_n^e by the center-of-momentum route:
///   2 int_{B0}^1 b_n(A(B)) |dA/dB| int_0^pi [psi(Y + Z(cos(beta) B + eta0 cos t)) +
///        psi(Y - Z(cos(beta) B + eta0 cos t)) - psi(|v|^2) - psi(|v*|^2)] dt dB,
/// i.e. the eta integral with weight (eta0^2 - eta^2)^(-1/2) after eta = eta0 cos t.
/// Collinear pairs are the eta0 = 0 limit, where the t-integral is pi times the integrand.
template <AngularKernelLike Base>
quad::Result k_transformed(const VelocityPair& pair, const WeightFunction& psi, const CutoffAngularKernel<Base>& bn,
                           const Restitution& r, PovznerTolerances tol = {}) {
    const auto g = detail::pair_geometry(pair, psi);
    if (g.gm == 0.0) return {0.0, 0.0};
    const double floor = 1e-15 * std::max(g.psi_v, 1e-300);
    double inner_err = 0.0;

    auto outer = [&](double B) {
        const auto q = detail::chart_at(B, g, bn, r);
        if (q.jac == 0.0) return 0.0;
        auto bracket = [&](double t) {
            const double x = q.Z * (q.c + q.eta0 * std::cos(t));
            return psi(std::max(0.0, q.Y + x)) + psi(std::max(0.0, q.Y - x)) - g.psi_v;
        };
        const auto in = quad::periodic_half(bracket, tol.inner_rel, floor);
        inner_err = std::max(inner_err, in.error);
        return 2.0 * q.jac * in.value;
    };
    const auto edges = detail::b_edges(bn, r);
    auto res = quad::adaptive(outer, edges, tol.rel, tol.abs_scale * g.psi_v * sphere_mass_bn(bn));
    res.error += inner_err * 2.0 * sphere_mass_bn(bn);
    return res;
}

/// K = (H1 - H2) + G after integrating by parts twice in eta.
struct HGParts {
    quad::Result h1;  ///< 2 pi int b_n |dA/dB| [psi(2Y) - psi(|v|^2) - psi(|v*|^2)] dB
    quad::Result h2;  ///< 2 pi int b_n |dA/dB| [psi(2Y) - psi(Y + Z cos(beta) B) - psi(Y - Z cos(beta) B)] dB
    quad::Result g;   ///< the psi'' remainder, nonnegative for convex psi

    double h() const noexcept { return h1.value - h2.value; }
    double error() const noexcept { return h1.error + h2.error + g.error; }
};

template <AngularKernelLike Base>
HGParts hg_decompose(const VelocityPair& pair, const WeightFunction& psi, const CutoffAngularKernel<Base>& bn,
                     const Restitution& r, PovznerTolerances tol = {}) {
    HGParts out;
    const auto g = detail::pair_geometry(pair, psi);
    if (g.gm == 0.0) return out;
    const auto edges = detail::b_edges(bn, r);
    const double two_pi = 2.0 * std::numbers::pi;

    auto h1 = [&](double B) {
        const auto q = detail::chart_at(B, g, bn, r);
        return two_pi * q.jac * (psi(2.0 * q.Y) - g.psi_v);
    };
    auto h2 = [&](double B) {
        const auto q = detail::chart_at(B, g, bn, r);
        const double x = q.Z * q.c;
        return two_pi * q.jac * (psi(2.0 * q.Y) - psi(std::max(0.0, q.Y + x)) - psi(std::max(0.0, q.Y - x)));
    };
    const double abs_tol = tol.abs_scale * g.psi_v * sphere_mass_bn(bn);
    out.h1 = quad::adaptive(h1, edges, tol.rel, abs_tol);
    out.h2 = quad::adaptive(h2, edges, tol.rel, abs_tol);

    if (psi.kind() == WeightKind::linear || g.sin_beta == 0.0) return out;  // psi'' = 0 or eta0 = 0

    // psi1'' blows up at 0 for kappa < 2; a node landing exactly on a zero of |v'|^2 is measure zero.
    const bool singular_at_zero = psi.kind() == WeightKind::psi1 && psi.kappa() < 2.0;
    auto d2 = [&](double x) { return x > 0.0 ? psi.d2(x) : (singular_at_zero ? 0.0 : psi.d2(0.0)); };
    double inner_err = 0.0;
    const std::array<double, 2> tau_edges{0.0, std::numbers::pi / 2.0};
    auto gfun = [&](double B) {
        const auto q = detail::chart_at(B, g, bn, r);
        if (q.jac == 0.0 || q.eta0 == 0.0 || q.Z == 0.0) return 0.0;
        auto integrand = [&](double t) {
            const double e = q.eta0 * std::cos(t);
            const double xp = q.Z * (q.c + e), xm = q.Z * (q.c - e);
            const double s = d2(q.Y + xp) + d2(q.Y + xm) + d2(q.Y - xp) + d2(q.Y - xm);
            return detail::ibp_weight(t) * std::sin(t) * s;
        };
        double e = 0.0, l1 = 0.0;
        const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
            integrand, 0.0, tau_edges[1], 15, tol.g_inner_rel, &e, &l1);
        inner_err = std::max(inner_err, e * q.jac * q.eta0 * q.eta0 * q.Z * q.Z);
        return 2.0 * q.jac * q.eta0 * q.eta0 * q.Z * q.Z * v;
    };
    out.g = quad::adaptive(gfun, edges, tol.rel, abs_tol);
    out.g.error += inner_err * 2.0;
    return out;
}

/// Shapes of the right-hand sides of the H and G bounds.
struct BoundShapes {
    double X = 0.0;  ///< coefficient of -C1
    double W = 0.0;  ///< coefficient of +C2
    double D = 0.0;  ///< coefficient of C3 (kappa < 2) or C4 (kappa >= 2)
};

/// psi1 uses |v|^(2+kappa) in the dissipative term; psi2 the sharper <v>^(2+kappa).
inline BoundShapes bound_shapes(const VelocityPair& pair, const WeightFunction& psi) {
    const double k = psi.kappa();
    const double a = norm(pair.v), b = norm(pair.v_star);
    const double ba = bracket(pair.v), bb = bracket(pair.v_star);
    BoundShapes s;
    if (psi.kind() == WeightKind::psi1)
        s.X = std::pow(a, 2.0 + k) * b * b + std::pow(b, 2.0 + k) * a * a;
    else
        s.X = std::pow(ba, 2.0 + k) * b * b + std::pow(bb, 2.0 + k) * a * a;
    s.W = std::pow(ba, 1.0 + k) * b + std::pow(bb, 1.0 + k) * a;
    if (k < 2.0)
        s.D = a * a * b * b;
    else
        s.D = b * b * std::pow(ba, k) + a * a * std::pow(bb, k);
    return s;
}

/// Slack of H <= -C1 X + C2 W; nonnegative when the bound holds.
inline double check_H_bound(const VelocityPair& pair, const WeightFunction& psi, double h_value, double C1,
                            double C2) {
    if (!(C1 > 0.0 && C2 > 0.0)) throw DomainError("H-bound constants must be positive");
    const auto s = bound_shapes(pair, psi);
    return -C1 * s.X + C2 * s.W - h_value;
}

/// Slack of G <= C3 |v|^2|v*|^2 (kappa < 2) or C4 (|v*|^2 <v>^kappa + |v|^2 <v*>^kappa) (kappa >= 2).
inline double check_G_bound(const VelocityPair& pair, const WeightFunction& psi, double g_value, double C34) {
    if (!(C34 > 0.0)) throw DomainError("G-bound constant must be positive");
    return C34 * bound_shapes(pair, psi).D - g_value;
}

/// One evaluated sweep point.
struct PovznerPoint {
    VelocityPair pair;
    double e = 1.0;
    double kappa = 1.0;
    double n = 1.0;
    WeightKind kind = WeightKind::psi1;
    double k_direct = std::numeric_limits<double>::quiet_NaN();
    double k_transformed = 0.0;
    double h1 = 0.0, h2 = 0.0, g = 0.0;
    double quad_error = 0.0;

    double h() const noexcept { return h1 - h2; }
};

/// Fills every field of a sweep point; k_direct only when asked (it is the slow route).
template <AngularKernelLike Base>
PovznerPoint evaluate_point(const VelocityPair& pair, WeightKind kind, double kappa, double e,
                            const CutoffAngularKernel<Base>& bn, bool with_direct, PovznerTolerances tol = {}) {
    PovznerPoint p;
    p.pair = pair;
    p.e = e;
    p.kappa = kappa;
    p.n = bn.n();
    p.kind = kind;
    const WeightFunction w(kind, kappa);
    const Restitution r(e);
    const auto kt = k_transformed(pair, w, bn, r, tol);
    const auto hg = hg_decompose(pair, w, bn, r, tol);
    p.k_transformed = kt.value;
    p.h1 = hg.h1.value;
    p.h2 = hg.h2.value;
    p.g = hg.g.value;
    p.quad_error = kt.error + hg.error();
    if (with_direct) {
        const auto kd = k_direct(pair, w, bn, r, tol);
        p.k_direct = kd.value;
        p.quad_error += kd.error;
    }
    return p;
}

struct FittedConstants {
    double C1 = 0.0;
    double C2 = 0.0;
    double C34 = 0.0;  ///< C3 if kappa < 2, otherwise C4
    bool feasible = true;
    std::string witness;  ///< description of an offending point when infeasible
    std::size_t points = 0;
};

/// Constants for one (weight, e, kappa) cell.
///
/// G: the single-variable LP min C s.t. C D_i >= g_i has the solution max g_i/D_i.
/// H: C2 = 2 max_i max(h_i, |h_i|/100)/W_i, then C1 is the largest value keeping every
/// margin nonnegative. Both C2 and C34 are maxima of per-point quantities, so enlarging the
/// grid never shrinks them.
inline FittedConstants fit_constants(const std::vector<PovznerPoint>& cell, double g_tol = 1e-12) {
    FittedConstants c;
    c.points = cell.size();
    if (cell.empty()) throw DomainError("fit_constants needs a nonempty grid");
    double c2 = 0.0, c34 = 0.0;
    for (const auto& p : cell) {
        const auto s = bound_shapes(p.pair, WeightFunction(p.kind, p.kappa));
        const double h = p.h();
        if (s.W > 0.0) {
            c2 = std::max(c2, 2.0 * std::max(h, 0.01 * std::abs(h)) / s.W);
        } else if (h > 0.0) {
            c.feasible = false;
            c.witness = "H > 0 where the C2 term vanishes";
        }
        if (s.D > 0.0) {
            c34 = std::max(c34, p.g / s.D);
        } else if (p.g > g_tol * std::max(1.0, std::abs(p.k_transformed))) {
            c.feasible = false;
            c.witness = "G > 0 where the G bound vanishes";
        }
    }
    if (c2 == 0.0) c2 = std::numeric_limits<double>::min();
    double c1 = std::numeric_limits<double>::infinity();
    for (const auto& p : cell) {
        const auto s = bound_shapes(p.pair, WeightFunction(p.kind, p.kappa));
        if (s.X > 0.0) c1 = std::min(c1, (c2 * s.W - p.h()) / s.X);
    }
    c.C1 = c1;
    c.C2 = c2;
    c.C34 = c34 > 0.0 ? c34 : std::numeric_limits<double>::min();
    if (!(c.C1 > 0.0) || !std::isfinite(c.C1)) {
        c.feasible = false;
        if (c.witness.empty()) c.witness = "no positive C1 satisfies every H margin";
    }
    return c;
}

struct ConvexityTriple {
    double lhs = 0.0;    ///< psi(x+y) - psi(x) - psi(y)
    double upper = 0.0;  ///< A (x psi'(y) + y psi'(x)), A = eta(2)
    double lower = 0.0;  ///< b x y psi''(x+y), b = 1/(2 eta(2))
};

inline ConvexityTriple appendix_convexity_check(const WeightFunction& psi, double x, double y) {
    if (x < 0.0 || y < 0.0) throw DomainError("convexity check needs x, y >= 0");
    const double a_tilde = psi.eta(2.0);
    const double b_tilde = 1.0 / (2.0 * psi.eta(2.0));
    ConvexityTriple t;
    t.lhs = psi(x + y) - psi(x) - psi(y);
    t.upper = a_tilde * ((x > 0.0 ? x * psi.d1(y) : 0.0) + (y > 0.0 ? y * psi.d1(x) : 0.0));
    t.lower = (x > 0.0 && y > 0.0) ? b_tilde * x * y * psi.d2(x + y) : 0.0;
    return t;
}

}  // namespace kinetics
