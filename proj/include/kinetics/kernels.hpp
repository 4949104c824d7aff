#pragma once

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numbers>
#include <string>
#include <vector>

#include "kinetics/errors.hpp"
#include "kinetics/quadrature.hpp"

namespace kinetics {

inline constexpr double half_pi = std::numbers::pi / 2.0;

/// Restitution coefficient with the derived center-of-momentum weights.
struct Restitution {
    double e = 1.0;
    double a_plus = 1.0;   ///< (1+e)/2
    double a_minus = 0.0;  ///< (1-e)/2

    Restitution() = default;
    explicit Restitution(double e_) : e(e_), a_plus(0.5 * (1.0 + e_)), a_minus(0.5 * (1.0 - e_)) {
        if (!(e_ > 0.0 && e_ <= 1.0)) throw DomainError("restitution e must lie in (0,1], got " + std::to_string(e_));
    }
};

/// Anything usable as an angular kernel on (0, pi/2]: b(theta) and b(theta)*sin(theta).
/// b must be nonincreasing in theta, which is what makes the cap a single angle.
template <class T>
concept AngularKernelLike = requires(const T& k, double theta) {
    { k.b(theta) } -> std::convertible_to<double>;
    { k.b_sin(theta) } -> std::convertible_to<double>;
};

/// b(cos theta) = K theta^(-1-2s) / sin theta: the non-integrable power singularity at grazing.
class AngularKernel {
  public:
    AngularKernel(double s, double strength) : s_(s), k_(strength) {
        if (!(s > 0.0 && s < 1.0)) throw DomainError("angular exponent s must lie in (0,1)");
        if (!(strength >= 0.0)) throw DomainError("kernel strength K must be nonnegative");
    }

    double s() const noexcept { return s_; }
    double strength() const noexcept { return k_; }

    double b(double theta) const {
        if (!(theta > 0.0)) throw DomainError("b(cos theta) is singular at theta = 0");
        return b_sin(theta) / std::sin(theta);
    }

    /// b(cos theta) sin(theta) = K theta^(-1-2s); also the density against dtheta.
    double b_sin(double theta) const noexcept { return k_ * std::pow(theta, -1.0 - 2.0 * s_); }

  private:
    double s_;
    double k_;
};

/// b == c; only used to exercise generic code against trivial closed forms.
class ConstantAngularKernel {
  public:
    explicit ConstantAngularKernel(double c) : c_(c) {}
    double b(double) const noexcept { return c_; }
    double b_sin(double theta) const noexcept { return c_ * std::sin(theta); }

  private:
    double c_;
};

inline double eval_b(const AngularKernel& kernel, double theta) {
    if (theta > half_pi) throw DomainError("theta beyond pi/2 is excluded by symmetrization");
    return kernel.b(theta);
}

/// Grad cutoff b_n = min(b, n).
template <AngularKernelLike Base = AngularKernel>
class CutoffAngularKernel {
  public:
    CutoffAngularKernel(Base base, double n) : base_(std::move(base)), n_(n) {
        if (!(n > 0.0)) throw DomainError("cutoff level n must be positive");
        theta_cap_ = find_cap();
    }

    const Base& base() const noexcept { return base_; }
    double n() const noexcept { return n_; }

    /// Largest angle at which the cap is active (b(theta_cap) = n); 0 if the cap never binds.
    double theta_cap() const noexcept { return theta_cap_; }

    double bn(double theta) const {
        if (theta <= 0.0 && theta_cap_ == 0.0) return std::min(base_.b(half_pi * std::ldexp(1.0, -60)), n_);
        if (theta <= theta_cap_) return n_;
        return std::min(base_.b(theta), n_);
    }

    /// b_n(cos theta) sin theta.
    double bn_sin(double theta) const {
        if (theta <= theta_cap_) return n_ * std::sin(theta);
        return std::min(base_.b_sin(theta), n_ * std::sin(theta));
    }

    /// b_n as a function of A = cos(theta), A in [0, 1].
    double bn_cos(double a) const {
        const double theta = 2.0 * std::asin(std::sqrt(std::clamp(0.5 * (1.0 - a), 0.0, 1.0)));
        return bn(theta);
    }

    /// Panel edges in theta for integrals against b_n: the cap kink plus geometric
    /// refinement toward grazing, (pi/2) 2^-k for k <= 40.
    std::vector<double> theta_edges() const {
        std::vector<double> edges{0.0};
        if (theta_cap_ > 0.0) edges.push_back(theta_cap_);
        std::vector<double> geo;
        for (int k = 40; k >= 0; --k) {
            const double t = half_pi * std::ldexp(1.0, -k);
            if (t > theta_cap_ * (1.0 + 1e-12)) geo.push_back(t);
        }
        // Inside a capped region the integrand is smooth; only refine above the cap.
        edges.insert(edges.end(), geo.begin(), geo.end());
        if (edges.back() < half_pi) edges.push_back(half_pi);
        return edges;
    }

  private:
    double find_cap() const {
        if (base_.b(half_pi) >= n_) return half_pi;
        const double tiny = half_pi * std::ldexp(1.0, -60);
        if (base_.b(tiny) <= n_) return 0.0;
        // b is monotone, so bracket on log(theta).
        auto f = [&](double x) { return std::log(base_.b(std::exp(x))) - std::log(n_); };
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(f, std::log(tiny), std::log(half_pi),
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
        return std::exp(0.5 * (r.first + r.second));
    }

    Base base_;
    double n_;
    double theta_cap_ = 0.0;
};

template <AngularKernelLike Base>
double eval_bn(const CutoffAngularKernel<Base>& kernel, double theta) {
    if (theta < 0.0 || theta > half_pi) throw DomainError("theta must lie in [0, pi/2]");
    return kernel.bn(theta);
}

/// 2 pi int_0^{pi/2} b_n(cos theta) sin theta dtheta.
template <AngularKernelLike Base>
quad::Result sphere_mass_bn_detail(const CutoffAngularKernel<Base>& kernel) {
    const auto edges = kernel.theta_edges();
    auto r = quad::panels([&](double t) { return kernel.bn_sin(t); }, edges);
    r.value *= 2.0 * std::numbers::pi;
    r.error *= 2.0 * std::numbers::pi;
    if (r.error > 1e-10 * std::max(1.0, std::abs(r.value)))
        throw QuadratureError("sphere_mass_bn", r.error);
    return r;
}

template <AngularKernelLike Base>
double sphere_mass_bn(const CutoffAngularKernel<Base>& kernel) {
    return sphere_mass_bn_detail(kernel).value;
}

/// int_0^{pi/2} sin^alpha0(theta/2) b(cos theta) sin theta dtheta, finite iff alpha0 > 2s.
/// `per_octave` subdivides each geometric panel; the part below (pi/2) 2^-40 is added
/// from the small-angle expansion sin(theta/2) ~ theta/2.
inline double weighted_angular_integral(const AngularKernel& kernel, double alpha0, int per_octave = 1) {
    const double s = kernel.s();
    if (!(alpha0 > 2.0 * s))
        throw DivergenceError("weighted angular integral diverges for alpha0 <= 2s (alpha0 = " +
                              std::to_string(alpha0) + ", 2s = " + std::to_string(2.0 * s) + ")");
    std::vector<double> edges;
    const int levels = 40 * per_octave;
    for (int k = levels; k >= 0; --k) edges.push_back(half_pi * std::exp2(-static_cast<double>(k) / per_octave));
    auto f = [&](double t) { return std::pow(std::sin(0.5 * t), alpha0) * kernel.b_sin(t); };
    const auto body = quad::panels(f, edges);
    const double eps = edges.front();
    const double tail = kernel.strength() * std::pow(2.0, -alpha0) * std::pow(eps, alpha0 - 2.0 * s) / (alpha0 - 2.0 * s);
    return body.value + tail;
}

/// Smooth partition profile: 1 on [0,1], 0 on [2,inf), C-infinity in between.
inline double phi_c(double x) noexcept {
    if (x <= 1.0) return 1.0;
    if (x >= 2.0) return 0.0;
    auto h = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
    const double a = h(2.0 - x);
    return a / (a + h(x - 1.0));
}

/// Phi(r) = r^gamma, 0 < gamma <= 2.
class KineticKernel {
  public:
    explicit KineticKernel(double gamma) : gamma_(gamma) {
        if (!(gamma > 0.0 && gamma <= 2.0))
            throw DomainError("hard-potential exponent gamma must lie in (0,2]");
    }
    double gamma() const noexcept { return gamma_; }
    double operator()(double r) const noexcept {
        if (r <= 0.0) return 0.0;
        if (gamma_ == 1.0) return r;
        if (gamma_ == 2.0) return r * r;
        return std::pow(r, gamma_);
    }

  private:
    double gamma_;
};

/// Phi_n(r) = r^gamma phi_c(r/n).
class MollifiedKineticKernel {
  public:
    MollifiedKineticKernel(KineticKernel base, double n) : base_(base), n_(n) {
        if (!(n > 0.0)) throw DomainError("cutoff level n must be positive");
    }
    MollifiedKineticKernel(double gamma, double n) : MollifiedKineticKernel(KineticKernel(gamma), n) {}

    double gamma() const noexcept { return base_.gamma(); }
    double n() const noexcept { return n_; }
    double support() const noexcept { return 2.0 * n_; }

    double operator()(double r) const noexcept {
        if (r <= n_) return base_(r);
        if (r >= 2.0 * n_) return 0.0;
        return base_(r) * phi_c(r / n_);
    }

    /// (2n)^gamma, a bound for sup Phi_n.
    double majorant() const noexcept { return std::pow(2.0 * n_, base_.gamma()); }

  private:
    KineticKernel base_;
    double n_;
};

inline double eval_phin(const MollifiedKineticKernel& kernel, double r) {
    if (r < 0.0) throw DomainError("speed must be nonnegative");
    return kernel(r);
}

}  // namespace kinetics
