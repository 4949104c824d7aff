#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace kinetics {

/// Argument outside the mathematical domain of an operation (e.g. theta = 0 for b).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// An integral that is known to diverge for the requested parameters.
class DivergenceError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Quadrature did not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
  public:
    QuadratureError(const std::string& what, double achieved)
        : std::runtime_error(format(what, achieved)), achieved_(achieved) {}

    double achieved() const noexcept { return achieved_; }

  private:
    static std::string format(const std::string& what, double achieved) {
        std::ostringstream os;
        os << what << " (achieved error estimate " << achieved << ")";
        return os.str();
    }

    double achieved_;
};

/// Invalid or unknown configuration.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A mathematical invariant was violated at run time.
class InvariantError : public std::runtime_error {
  public:
    InvariantError(std::string invariant, const std::string& detail)
        : std::runtime_error(invariant + ": " + detail), invariant_(std::move(invariant)) {}

    const std::string& invariant() const noexcept { return invariant_; }

  private:
    std::string invariant_;
};

}  // namespace kinetics
