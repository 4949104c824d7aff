#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "kinetics/errors.hpp"

namespace kinetics::quad {

/// Value together with an a-posteriori error estimate.
struct Result {
    double value = 0.0;
    double error = 0.0;

    Result& operator+=(const Result& o) {
        value += o.value;
        error += o.error;
        return *this;
    }
};

/// Neumaier compensated accumulator.
class Sum {
  public:
    void add(double x) noexcept {
        const double t = s_ + x;
        c_ += (std::abs(s_) >= std::abs(x)) ? (s_ - t) + x : (x - t) + s_;
        s_ = t;
    }
    Sum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    double value() const noexcept { return s_ + c_; }

  private:
    double s_ = 0.0;
    double c_ = 0.0;
};

/// Fixed-order Gauss-Legendre rule on [a, b].
template <unsigned Points, class F>
double gauss(F&& f, double a, double b) {
    return boost::math::quadrature::gauss<double, Points>::integrate(f, a, b);
}

/// Gauss-Legendre over consecutive panels [edges[i], edges[i+1]].
/// The error estimate is the panelwise difference between the 20- and 10-point rules.
template <class F>
Result panels(F&& f, std::span<const double> edges) {
    Sum hi, err;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double a = edges[i], b = edges[i + 1];
        if (!(b > a)) continue;
        const double v20 = gauss<20>(f, a, b);
        const double v10 = gauss<10>(f, a, b);
        hi += v20;
        err += std::abs(v20 - v10);
    }
    return {hi.value(), err.value()};
}

/// Globally adaptive Gauss-Kronrod (7/15 points) started from the given panels: the panel
/// with the largest error estimate is bisected until the summed estimate drops below
/// max(abs_tol, rel_tol * |value|). The absolute floor matters when the integrand is a
/// difference of large terms and its round-off noise exceeds any relative target.
/// Throws QuadratureError if `max_splits` bisections do not suffice.
template <class F>
Result adaptive(F&& f, std::span<const double> edges, double rel_tol, double abs_tol = 0.0,
                unsigned max_splits = 4000) {
    struct Piece {
        double a, b, value, error;
        bool operator<(const Piece& o) const { return error < o.error; }
    };
    auto rule = [&](double a, double b) {
        double err = 0.0;
        const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err);
        return Piece{a, b, v, err};
    };
    std::priority_queue<Piece> heap;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!(edges[i + 1] > edges[i])) continue;
        heap.push(rule(edges[i], edges[i + 1]));
    }
    auto totals = [&]() {
        auto copy = heap;
        Sum v, e;
        while (!copy.empty()) {
            v += copy.top().value;
            e += copy.top().error;
            copy.pop();
        }
        return Result{v.value(), e.value()};
    };
    Result r = totals();
    unsigned splits = 0;
    while (r.error > std::max(abs_tol, rel_tol * std::abs(r.value)) && splits < max_splits && !heap.empty()) {
        const Piece worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            // Interval exhausted at machine resolution; keep its estimate.
            heap.push(Piece{worst.a, worst.b, worst.value, 0.0});
            r = totals();
            continue;
        }
        const Piece left = rule(worst.a, mid), right = rule(mid, worst.b);
        r.value += left.value + right.value - worst.value;
        r.error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if (++splits % 64 == 0) r = totals();  // refresh the running sums against drift
    }
    r = totals();
    if (r.error > std::max(abs_tol, rel_tol * std::abs(r.value)))
        throw QuadratureError("adaptive Gauss-Kronrod did not converge", r.error);
    return r;
}

/// Trapezoid rule for int_0^pi f(t) dt where f extends to an even 2pi-periodic smooth function.
/// For such integrands the rule converges spectrally, so the error estimate is the last change.
template <class F>
Result periodic_half(F&& f, double rel_tol, double abs_tol = 0.0, int min_level = 3, int max_level = 14) {
    const double pi = 3.14159265358979323846;
    int m = 1 << min_level;  // intervals
    double h = pi / m;
    Sum s;
    s += 0.5 * (f(0.0) + f(pi));
    for (int k = 1; k < m; ++k) s += f(k * h);
    double prev = s.value() * h;
    for (int level = min_level + 1; level <= max_level; ++level) {
        // Add the midpoints of the current grid.
        for (int k = 0; k < m; ++k) s += f((k + 0.5) * h);
        m *= 2;
        h *= 0.5;
        const double cur = s.value() * h;
        const double change = std::abs(cur - prev);
        if (change <= std::max(abs_tol, rel_tol * std::abs(cur))) return {cur, change};
        prev = cur;
    }
    throw QuadratureError("periodic trapezoid did not converge", std::abs(prev));
}

/// Trapezoid rule for a smooth 2pi-periodic integrand over [0, 2pi).
template <class F>
Result periodic_full(F&& f, double rel_tol, double abs_tol = 0.0, int min_level = 3, int max_level = 14) {
    const double two_pi = 6.28318530717958647692;
    int m = 1 << min_level;
    double h = two_pi / m;
    Sum s;
    for (int k = 0; k < m; ++k) s += f(k * h);
    double prev = s.value() * h;
    for (int level = min_level + 1; level <= max_level; ++level) {
        for (int k = 0; k < m; ++k) s += f((k + 0.5) * h);
        m *= 2;
        h *= 0.5;
        const double cur = s.value() * h;
        const double change = std::abs(cur - prev);
        if (change <= std::max(abs_tol, rel_tol * std::abs(cur))) return {cur, change};
        prev = cur;
    }
    throw QuadratureError("periodic trapezoid did not converge", std::abs(prev));
}

}  // namespace kinetics::quad
