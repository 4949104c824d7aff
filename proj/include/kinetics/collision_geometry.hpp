#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kinetics/errors.hpp"
#include "kinetics/kernels.hpp"
#include "kinetics/vec3.hpp"

namespace kinetics {

struct VelocityPair {
    Vec3 v;
    Vec3 v_star;

    Vec3 v_plus() const noexcept { return v + v_star; }
    Vec3 v_minus() const noexcept { return v - v_star; }
    double energy() const noexcept { return norm2(v) + norm2(v_star); }
};

struct PostCollisionPair {
    Vec3 v_prime;
    Vec3 v_star_prime;
    double delta_E = 0.0;  ///< post minus pre kinetic energy (|.|^2 units), never positive
};

/// Tolerance on |sigma| - 1 accepted by the collision maps.
inline constexpr double unit_tolerance = 1e-12;

namespace detail {
inline void require_unit(const Vec3& u, const char* what) {
    if (std::abs(norm(u) - 1.0) > unit_tolerance)
        throw DomainError(std::string(what) + " must be a unit vector");
}
}  // namespace detail

/// -(1-e^2)/2 * (1 - vhat_- . sigma)/2 * |v - v*|^2.
inline double energy_loss(const VelocityPair& pair, const Vec3& sigma, const Restitution& r) {
    detail::require_unit(sigma, "sigma");
    const Vec3 vm = pair.v_minus();
    const double g2 = norm2(vm);
    if (g2 == 0.0) return 0.0;
    const double cos_theta = dot(vm, sigma) / std::sqrt(g2);
    return -0.5 * (1.0 - r.e * r.e) * 0.5 * (1.0 - cos_theta) * g2;
}

/// Inelastic collision in the sigma-representation:
///   v'  = v+/2 + (1-e)/4 v- + (1+e)/4 |v-| sigma
///   v*' = v+/2 - (1-e)/4 v- - (1+e)/4 |v-| sigma
/// The energy change is taken from the closed-form loss and checked against the
/// direct energy difference.
inline PostCollisionPair post_collide_sigma(const VelocityPair& pair, const Vec3& sigma, const Restitution& r) {
    detail::require_unit(sigma, "sigma");
    const Vec3 vp = pair.v_plus();
    const Vec3 vm = pair.v_minus();
    const double g = norm(vm);
    if (g == 0.0) return {pair.v, pair.v_star, 0.0};

    const Vec3 half = 0.5 * vp;
    const Vec3 kick = (0.5 * r.a_minus) * vm + (0.5 * r.a_plus * g) * sigma;
    PostCollisionPair out{half + kick, half - kick, energy_loss(pair, sigma, r)};

    const double direct = norm2(out.v_prime) + norm2(out.v_star_prime) - pair.energy();
    const double scale = pair.energy() + norm2(vm);
    if (std::abs(direct - out.delta_E) > 1e-9 * scale)
        throw InvariantError("energy-loss identity",
                             "direct " + std::to_string(direct) + " vs closed form " + std::to_string(out.delta_E));
    return out;
}

/// lambda(cos chi) = a- cos chi + sqrt(a-^2 (cos^2 chi - 1) + a+^2), in [e, 1].
inline double lambda_of_chi(double cos_chi, const Restitution& r) {
    if (std::abs(cos_chi) > 1.0 + 1e-12) throw DomainError("|cos chi| must not exceed 1");
    const double b = std::clamp(cos_chi, -1.0, 1.0);
    return r.a_minus * b + std::sqrt(r.a_minus * r.a_minus * (b * b - 1.0) + r.a_plus * r.a_plus);
}

/// Center-of-momentum representation v' = (v+ + lambda |v-| omega)/2.
inline PostCollisionPair post_collide_omega(const VelocityPair& pair, const Vec3& omega, const Restitution& r) {
    detail::require_unit(omega, "omega");
    const Vec3 vp = pair.v_plus();
    const Vec3 vm = pair.v_minus();
    const double g = norm(vm);
    if (g == 0.0) return {pair.v, pair.v_star, 0.0};
    const double lam = lambda_of_chi(dot(omega, vm) / g, r);
    const Vec3 kick = (0.5 * lam * g) * omega;
    const Vec3 half = 0.5 * vp;
    return {half + kick, half - kick, 0.5 * (lam * lam - 1.0) * g * g};
}

/// Lower end of the admissible B = cos chi range, the image of cos theta = 0.
inline double B_lower(const Restitution& r) {
    return r.a_minus / std::sqrt(r.a_plus * r.a_plus + r.a_minus * r.a_minus);
}

/// A = cos theta as a function of B = cos chi: (lambda(B) B - a-)/a+.
inline double theta_from_B(double B, const Restitution& r) {
    const double lo = B_lower(r);
    if (B < lo - 1e-12 || B > 1.0 + 1e-12)
        throw DomainError("B = " + std::to_string(B) + " outside the admissible range [" + std::to_string(lo) + ", 1]");
    B = std::clamp(B, lo, 1.0);
    const double A = (lambda_of_chi(B, r) * B - r.a_minus) / r.a_plus;
    return std::clamp(A, 0.0, 1.0);
}

/// Inverse of theta_from_B: omega direction of a+ sigma + a- vhat_-.
inline double B_from_A(double A, const Restitution& r) {
    const double along = r.a_plus * A + r.a_minus;
    const double across2 = r.a_plus * r.a_plus * std::max(0.0, 1.0 - A * A);
    return along / std::sqrt(along * along + across2);
}

/// Same as B_from_A but from theta, accurate near grazing.
inline double B_from_theta(double theta, const Restitution& r) {
    const double along = r.a_plus * std::cos(theta) + r.a_minus;
    const double across = r.a_plus * std::sin(theta);
    return along / std::hypot(along, across);
}

/// dA/dB = [a- B + sqrt(a-^2 (B^2-1) + a+^2)]^2 / (a+ sqrt(a-^2 (B^2-1) + a+^2)).
inline double dA_dB(double B, const Restitution& r) {
    const double root = std::sqrt(r.a_minus * r.a_minus * (B * B - 1.0) + r.a_plus * r.a_plus);
    const double num = r.a_minus * B + root;
    return num * num / (r.a_plus * root);
}

/// Orthonormal frame (vhat_-, j, h) with j = v x v* / |v x v*| and h = j x vhat_-,
/// so that vhat_+ . h = sin(beta) >= 0.
struct CollisionFrame {
    Vec3 vm_hat;
    Vec3 j;
    Vec3 h;
    bool degenerate = false;  ///< v x v* = 0: j is an arbitrary completion
};

inline CollisionFrame collision_frame(const VelocityPair& pair) {
    const Vec3 vm = pair.v_minus();
    const double g = norm(vm);
    if (g == 0.0) throw DomainError("collision frame undefined for v = v*");
    CollisionFrame f;
    f.vm_hat = vm / g;
    const Vec3 c = cross(pair.v, pair.v_star);
    const double cn = norm(c);
    // Relative threshold: |v x v*| tiny compared to |v||v*| means collinear to round-off.
    if (cn <= 1e-14 * norm(pair.v) * norm(pair.v_star) || cn == 0.0) {
        f.j = any_orthogonal(f.vm_hat);
        f.degenerate = true;
    } else {
        f.j = c / cn;
        // Re-orthogonalize against vhat_- for round-off.
        f.j = normalized(f.j - dot(f.j, f.vm_hat) * f.vm_hat);
    }
    f.h = cross(f.j, f.vm_hat);
    return f;
}

inline Vec3 sigma_from_angles(const CollisionFrame& f, double theta, double phi) {
    const double st = std::sin(theta);
    return std::cos(theta) * f.vm_hat + (st * std::cos(phi)) * f.j + (st * std::sin(phi)) * f.h;
}

/// Coordinates of one collision in the chain (theta, phi) -> (chi, mu) -> (B, eta).
struct AngleChart {
    double theta = 0.0;
    double phi = 0.0;
    double chi = 0.0;
    double mu = 0.0;
    double beta = 0.0;
    double A = 1.0;
    double B = 1.0;
    double eta = 0.0;
    double eta0 = 0.0;
    double lambda = 1.0;
    double Y = 0.0;
    double Z = 0.0;
};

/// Builds the chart for (pair, sigma). Asserts the cos(mu) identity and |eta| <= eta0.
inline AngleChart build_chart(const VelocityPair& pair, const Vec3& sigma, const Restitution& r) {
    detail::require_unit(sigma, "sigma");
    const Vec3 vp = pair.v_plus();
    const double gp = norm(vp);
    if (gp == 0.0) throw DomainError("beta undefined for v + v* = 0");
    const CollisionFrame f = collision_frame(pair);
    const Vec3 vp_hat = vp / gp;
    const double gm = norm(pair.v_minus());

    AngleChart c;
    const double cos_beta = dot(vp_hat, f.vm_hat);
    const double sin_beta = f.degenerate ? 0.0 : std::max(0.0, dot(vp_hat, f.h));
    c.beta = std::atan2(sin_beta, cos_beta);

    c.theta = angle_between(sigma, f.vm_hat);
    c.A = dot(sigma, f.vm_hat);
    c.phi = std::atan2(dot(sigma, f.h), dot(sigma, f.j));
    if (c.phi < 0.0) c.phi += 2.0 * std::numbers::pi;

    const Vec3 lw = r.a_plus * sigma + r.a_minus * f.vm_hat;
    c.lambda = norm(lw);
    const Vec3 omega = lw / c.lambda;
    c.B = dot(omega, f.vm_hat);
    c.chi = angle_between(omega, f.vm_hat);
    c.mu = angle_between(omega, vp_hat);
    const double cos_mu = dot(omega, vp_hat);

    c.eta = cos_mu - cos_beta * c.B;
    const double rad = r.a_plus * r.a_plus - std::pow(c.lambda * c.B - r.a_minus, 2);
    c.eta0 = sin_beta * std::sqrt(std::max(0.0, rad)) / c.lambda;
    c.Y = 0.25 * (gp * gp + c.lambda * c.lambda * gm * gm);
    c.Z = 0.5 * c.lambda * gp * gm;

    const double lam_check = lambda_of_chi(c.B, r);
    if (std::abs(lam_check - c.lambda) > 1e-10)
        throw InvariantError("lambda(cos chi)", std::to_string(lam_check) + " vs " + std::to_string(c.lambda));
    const double cos_mu_formula =
        cos_beta * c.B + sin_beta * r.a_plus * std::sin(c.theta) * std::sin(c.phi) / c.lambda;
    if (std::abs(cos_mu_formula - cos_mu) > 1e-10)
        throw InvariantError("cos(mu) identity", std::to_string(cos_mu_formula) + " vs " + std::to_string(cos_mu));
    if (std::abs(c.eta) > c.eta0 + 1e-12)
        throw InvariantError("|eta| <= eta0", std::to_string(c.eta) + " vs " + std::to_string(c.eta0));
    return c;
}

/// |dphi/dmu| in the reduced form |sin mu| / sqrt(eta0^2 - eta^2).
inline double dphi_dmu_reduced(const AngleChart& c) {
    return std::abs(std::sin(c.mu)) / std::sqrt(c.eta0 * c.eta0 - c.eta * c.eta);
}

/// |dphi/dmu| before the eta substitution:
/// lambda |sin mu| / sqrt(sin^2 beta [a+^2 - (lambda cos chi - a-)^2] - lambda^2 (cos mu - cos beta cos chi)^2).
inline double dphi_dmu_unreduced(const AngleChart& c, const Restitution& r) {
    const double sb = std::sin(c.beta);
    const double inner = sb * sb * (r.a_plus * r.a_plus - std::pow(c.lambda * std::cos(c.chi) - r.a_minus, 2)) -
                         c.lambda * c.lambda * std::pow(std::cos(c.mu) - std::cos(c.beta) * std::cos(c.chi), 2);
    return c.lambda * std::abs(std::sin(c.mu)) / std::sqrt(inner);
}

}  // namespace kinetics
