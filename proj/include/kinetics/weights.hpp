#pragma once

#include <cmath>
#include <string>

#include "kinetics/errors.hpp"

namespace kinetics {

enum class WeightKind {
    linear,      ///< psi(x) = x; test surrogate for which the Povzner bracket is the energy change
    psi1,        ///< x^(1+kappa/2)
    psi2,        ///< (1+x)^(1+kappa/2) - 1
    psi_trunc,   ///< psi2 up to m, tangent line p_{kappa,m} beyond
    psi_remainder,  ///< psi_trunc - p_{kappa,m}: supported in [0, m]
};

inline std::string to_string(WeightKind k) {
    switch (k) {
        case WeightKind::linear: return "linear";
        case WeightKind::psi1: return "psi1";
        case WeightKind::psi2: return "psi2";
        case WeightKind::psi_trunc: return "psi_trunc";
        case WeightKind::psi_remainder: return "psi_remainder";
    }
    return "?";
}

inline WeightKind weight_kind_from_string(const std::string& s) {
    if (s == "linear") return WeightKind::linear;
    if (s == "psi1") return WeightKind::psi1;
    if (s == "psi2") return WeightKind::psi2;
    if (s == "psi_trunc") return WeightKind::psi_trunc;
    if (s == "psi_remainder") return WeightKind::psi_remainder;
    throw ConfigError("unknown weight kind '" + s + "'");
}

/// Convex weight psi(x), x = |v|^2, with closed-form first and second derivatives.
class WeightFunction {
  public:
    WeightFunction(WeightKind kind, double kappa, double m = 0.0) : kind_(kind), kappa_(kappa), m_(m) {
        if (kind != WeightKind::linear && !(kappa > 0.0)) throw DomainError("kappa must be positive");
        if ((kind == WeightKind::psi_trunc || kind == WeightKind::psi_remainder) && !(m > 0.0))
            throw DomainError("truncation level m must be positive");
        p_ = 1.0 + 0.5 * kappa_;
    }

    static WeightFunction linear() { return {WeightKind::linear, 0.0}; }

    WeightKind kind() const noexcept { return kind_; }
    double kappa() const noexcept { return kappa_; }
    double m() const noexcept { return m_; }

    double operator()(double x) const {
        switch (kind_) {
            case WeightKind::linear: return x;
            case WeightKind::psi1: return std::pow(x, p_);
            case WeightKind::psi2: return psi2(x);
            case WeightKind::psi_trunc: return x <= m_ ? psi2(x) : tangent(x);
            case WeightKind::psi_remainder: return x <= m_ ? psi2(x) - tangent(x) : 0.0;
        }
        return 0.0;
    }

    double d1(double x) const {
        switch (kind_) {
            case WeightKind::linear: return 1.0;
            case WeightKind::psi1: return p_ * std::pow(x, p_ - 1.0);
            case WeightKind::psi2: return psi2_d1(x);
            case WeightKind::psi_trunc: return x <= m_ ? psi2_d1(x) : slope();
            case WeightKind::psi_remainder: return x <= m_ ? psi2_d1(x) - slope() : 0.0;
        }
        return 0.0;
    }

    /// Second derivative; for the truncated kinds the left limit is used at x = m.
    double d2(double x) const {
        switch (kind_) {
            case WeightKind::linear: return 0.0;
            case WeightKind::psi1: return x > 0.0 ? p_ * (p_ - 1.0) * std::pow(x, p_ - 2.0)
                                                  : (p_ >= 2.0 ? p_ * (p_ - 1.0) * std::pow(0.0, p_ - 2.0)
                                                               : HUGE_VAL);
            case WeightKind::psi2: return psi2_d2(x);
            case WeightKind::psi_trunc:
            case WeightKind::psi_remainder: return x <= m_ ? psi2_d2(x) : 0.0;
        }
        return 0.0;
    }

    /// C_kappa(m) = psi2'(m), the slope of the tangent continuation.
    double slope() const { return psi2_d1(m_); }

    /// p_{kappa,m}(x) = C(m) x + psi2(m) - C(m) m.
    double tangent(double x) const { return slope() * (x - m_) + psi2(m_); }

    /// Growth factor eta(a) with psi'(a x) <= eta(a) psi'(x) and psi''(a x) <= eta(a) psi''(x), a >= 1.
    /// For psi1 this is homogeneity; for psi2, 1 + a x <= a (1 + x) gives the same a^(kappa/2).
    double eta(double a) const {
        if (kind_ == WeightKind::linear) return 1.0;
        return std::pow(a, 0.5 * kappa_);
    }

  private:
    double psi2(double x) const { return std::expm1(p_ * std::log1p(x)); }  // no cancellation near 0
    double psi2_d1(double x) const { return p_ * std::pow(1.0 + x, p_ - 1.0); }
    double psi2_d2(double x) const { return p_ * (p_ - 1.0) * std::pow(1.0 + x, p_ - 2.0); }

    WeightKind kind_;
    double kappa_;
    double m_;
    double p_ = 1.0;
};

}  // namespace kinetics
