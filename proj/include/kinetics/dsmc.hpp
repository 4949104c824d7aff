#pragma once

#include <math.h>  // Boost 1.74 pchip calls isnan unqualified

#include <algorithm>
#include <bit>
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kinetics/collision_geometry.hpp"
#include "kinetics/errors.hpp"
#include "kinetics/kernels.hpp"
#include "kinetics/quadrature.hpp"
#include "kinetics/random.hpp"
#include "kinetics/vec3.hpp"

namespace kinetics {

enum class InitialKind { maxwellian, power_tail, bi_maxwellian };

/// How radial quantiles of the power-tail law are drawn.
/// `stratified` takes the midpoint of each of N equal-probability strata (quiet start);
/// directions stay random. `iid` draws every quantile independently.
enum class RadialLoading { iid, stratified };

struct InitialLaw {
    InitialKind kind = InitialKind::maxwellian;
    double T = 1.0;          ///< maxwellian temperature
    double q = 6.0;          ///< power_tail exponent: density proportional to <v>^-q
    double T1 = 1.0, T2 = 1.0;
    double fraction = 0.5;   ///< share of particles at T1 for bi_maxwellian
    RadialLoading loading = RadialLoading::iid;
};

struct SimConfig {
    double e = 0.5;
    double gamma = 1.0;
    double s = 0.25;
    double K = 1.0;
    double n = 8.0;          ///< cutoff level for both b_n and Phi_n
    std::size_t N = 10000;
    double t_final = 1.0;
    std::uint64_t seed = 1;
    InitialLaw init;
    std::vector<double> moment_orders{0.0, 2.0, 4.0};
    double output_dt = 0.1;
    std::vector<double> snapshot_times;  ///< snapshots are taken at the step nearest each time
    double dt_factor = 0.1;              ///< dt * Lambda_major
    unsigned workers = 1;

    void validate() const {
        if (!(e > 0.0 && e <= 1.0)) throw ConfigError("e must lie in (0, 1]: restitution coefficient range");
        if (!(gamma > 0.0 && gamma <= 2.0)) throw ConfigError("gamma must lie in (0, 2]: hard-potential range");
        if (!(s > 0.0 && s < 1.0)) throw ConfigError("s must lie in (0, 1): angular singularity order");
        if (!(K > 0.0)) throw ConfigError("K must be positive");
        if (!(n > 0.0)) throw ConfigError("n must be positive");
        if (N < 2) throw ConfigError("N must be at least 2");
        if (!(t_final >= 0.0)) throw ConfigError("t_final must be nonnegative");
        if (!(output_dt > 0.0)) throw ConfigError("output_dt must be positive");
        if (!(dt_factor > 0.0 && dt_factor <= 0.1)) throw ConfigError("dt_factor must lie in (0, 0.1]");
        if (workers == 0) throw ConfigError("workers must be at least 1");
        switch (init.kind) {
            case InitialKind::maxwellian:
                if (!(init.T > 0.0)) throw ConfigError("maxwellian T must be positive");
                break;
            case InitialKind::power_tail:
                if (!(init.q > 5.0)) throw ConfigError("power_tail needs q > 5: finite energy of the initial law");
                break;
            case InitialKind::bi_maxwellian:
                if (!(init.T1 > 0.0 && init.T2 > 0.0)) throw ConfigError("bi_maxwellian temperatures must be positive");
                if (!(init.fraction >= 0.0 && init.fraction <= 1.0)) throw ConfigError("fraction must lie in [0, 1]");
                break;
        }
    }
};

struct ParticleEnsemble {
    std::vector<Vec3> v;
    double time = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;  ///< counter that keys the per-step random streams

    std::size_t size() const noexcept { return v.size(); }
    double weight() const noexcept { return 1.0 / static_cast<double>(v.size()); }
};

namespace detail {

inline Vec3 unit_from(double u1, double u2) {
    const double z = 2.0 * u1 - 1.0, a = 2.0 * std::numbers::pi * u2;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(a), r * std::sin(a), z};
}

inline void recenter(std::vector<Vec3>& v) {
    // two passes: the second removes what round-off left of the first
    for (int pass = 0; pass < 2; ++pass) {
        quad::Sum sx, sy, sz;
        for (const auto& x : v) {
            sx.add(x.x);
            sy.add(x.y);
            sz.add(x.z);
        }
        const double inv = 1.0 / static_cast<double>(v.size());
        const Vec3 m{sx.value() * inv, sy.value() * inv, sz.value() * inv};
        for (auto& x : v) x -= m;
    }
}

/// Radius of the power-tail law at quantile u: r^2/(1+r^2) is Beta(3/2, (q-3)/2).
inline double power_tail_radius(double q, double u) {
    double y = 0.0;
    const double x = boost::math::ibeta_inv(1.5, 0.5 * (q - 3.0), u, &y);
    return std::sqrt(x / y);
}

}  // namespace detail

/// N samples of the initial law, recentered to zero mean.
inline ParticleEnsemble init_ensemble(const SimConfig& cfg) {
    cfg.validate();
    ParticleEnsemble ens;
    ens.seed = cfg.seed;
    ens.v.resize(cfg.N);
    Philox4x32 g(cfg.seed, stream_id(0x1417ull, 0));
    const auto& law = cfg.init;
    switch (law.kind) {
        case InitialKind::maxwellian: {
            const double sd = std::sqrt(law.T);
            for (auto& x : ens.v) x = sd * Vec3{g.normal(), g.normal(), g.normal()};
            break;
        }
        case InitialKind::bi_maxwellian: {
            const auto n1 = static_cast<std::size_t>(std::llround(law.fraction * static_cast<double>(cfg.N)));
            for (std::size_t i = 0; i < cfg.N; ++i) {
                const double sd = std::sqrt(i < n1 ? law.T1 : law.T2);
                ens.v[i] = sd * Vec3{g.normal(), g.normal(), g.normal()};
            }
            break;
        }
        case InitialKind::power_tail: {
            const double inv_n = 1.0 / static_cast<double>(cfg.N);
            for (std::size_t i = 0; i < cfg.N; ++i) {
                const double u =
                    law.loading == RadialLoading::stratified ? (static_cast<double>(i) + 0.5) * inv_n : g.uniform();
                const double r = detail::power_tail_radius(law.q, u);
                const double u1 = g.uniform(), u2 = g.uniform();
                ens.v[i] = r * detail::unit_from(u1, u2);
            }
            break;
        }
    }
    detail::recenter(ens.v);
    return ens;
}

/// Inverse CDF of the normalized density b_n(cos theta) sin theta on [0, pi/2], tabulated at
/// Chebyshev-spaced angles and interpolated with a monotone cubic.
template <AngularKernelLike Base>
class ThetaSampler {
  public:
    static constexpr std::size_t table_size = 4096;

    explicit ThetaSampler(const CutoffAngularKernel<Base>& bn) {
        std::vector<double> theta(table_size), cdf(table_size);
        for (std::size_t k = 0; k < table_size; ++k)
            theta[k] = 0.5 * half_pi * (1.0 - std::cos(std::numbers::pi * static_cast<double>(k) / (table_size - 1)));
        theta.front() = 0.0;
        theta.back() = half_pi;
        const double tc = bn.theta_cap();
        auto f = [&](double t) { return bn.bn_sin(t); };
        quad::Sum acc;
        cdf[0] = 0.0;
        for (std::size_t k = 1; k < table_size; ++k) {
            const double a = theta[k - 1], b = theta[k];
            if (tc > a && tc < b)
                acc.add(quad::gauss<20>(f, a, tc) + quad::gauss<20>(f, tc, b));
            else
                acc.add(quad::gauss<20>(f, a, b));
            cdf[k] = acc.value();
        }
        total_ = acc.value();
        for (auto& c : cdf) c /= total_;
        cdf.back() = 1.0;
        inv_ = std::make_unique<boost::math::interpolators::pchip<std::vector<double>>>(std::move(cdf),
                                                                                         std::move(theta));
    }

    ThetaSampler(ThetaSampler&&) noexcept = default;

    /// theta at quantile u in [0, 1].
    double operator()(double u) const { return std::clamp((*inv_)(u), 0.0, half_pi); }

    /// int_0^{pi/2} b_n sin theta dtheta, as integrated for the table.
    double total() const noexcept { return total_; }

  private:
    std::unique_ptr<boost::math::interpolators::pchip<std::vector<double>>> inv_;
    double total_ = 0.0;
};

/// Everything a step needs about the cutoff collision operator.
struct CollisionModel {
    Restitution restitution;
    CutoffAngularKernel<AngularKernel> bn;
    MollifiedKineticKernel phin;
    ThetaSampler<AngularKernel> theta;
    double mass = 0.0;         ///< int b_n dsigma
    double lambda_major = 0.0;  ///< mass * (2n)^gamma

    explicit CollisionModel(const SimConfig& cfg)
        : restitution(cfg.e),
          bn(AngularKernel(cfg.s, cfg.K), cfg.n),
          phin(cfg.gamma, cfg.n),
          theta(bn),
          mass(sphere_mass_bn(bn)),
          lambda_major(mass * phin.majorant()) {}
};

struct StepStats {
    std::uint64_t candidates = 0;
    std::uint64_t accepted = 0;
};

namespace detail {

/// Collide one candidate pair in place; returns true if the collision was accepted.
/// Randomness comes from raw Philox blocks at counter (pair, sub-block, step): the first block
/// decides acceptance, the second (drawn only on acceptance) gives theta and phi.
inline bool process_pair(Vec3& a, Vec3& b, const CollisionModel& m, std::array<std::uint32_t, 2> key,
                         std::uint64_t step, std::uint32_t pair) {
    const auto lo = static_cast<std::uint32_t>(step), hi = static_cast<std::uint32_t>(step >> 32);
    const auto r0 = Philox4x32::block({pair, 0u, lo, hi}, key);
    const Vec3 vm = a - b;
    const double gm = norm(vm);
    const double p = m.phin(gm) / m.phin.majorant();
    if (!(Philox4x32::to_uniform(r0[0], r0[1]) < p)) return false;
    const auto r1 = Philox4x32::block({pair, 1u, lo, hi}, key);
    const double theta = m.theta(Philox4x32::to_uniform(r1[0], r1[1]));
    const double phi = 2.0 * std::numbers::pi * Philox4x32::to_uniform(r1[2], r1[3]);
    const Vec3 w = vm / gm;
    const Vec3 e1 = any_orthogonal(w);
    const Vec3 e2 = cross(w, e1);
    const double st = std::sin(theta);
    Vec3 sigma = std::cos(theta) * w + (st * std::cos(phi)) * e1 + (st * std::sin(phi)) * e2;
    sigma = sigma / norm(sigma);
    const auto out = post_collide_sigma(VelocityPair{a, b}, sigma, m.restitution);
    a = out.v_prime;
    b = out.v_star_prime;
    return true;
}

}  // namespace detail

/// One Nanbu-Babovsky step under the majorant: Poisson(N dt Lambda/2) disjoint candidate pairs,
/// each accepted with probability Phi_n(|v - v*|)/(2n)^gamma. Pairs are drawn by a partial
/// Fisher-Yates shuffle, so every unordered pair has the same marginal probability. Each pair's
/// randomness is keyed by (seed, step, pair index), which makes the outcome independent of how
/// pairs are split among workers.
inline StepStats step(ParticleEnsemble& ens, double dt, const CollisionModel& m, std::vector<std::uint32_t>& perm,
                      unsigned workers = 1) {
    const std::size_t N = ens.size();
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (N > 0xFFFFFFFFull) throw DomainError("ensemble too large for 32-bit pair indices");
    if (dt * m.lambda_major > 0.1 * (1.0 + 1e-12))
        throw DomainError("dt * Lambda_major = " + std::to_string(dt * m.lambda_major) + " exceeds 0.1");
    if (perm.size() != N) {
        perm.resize(N);
        for (std::size_t i = 0; i < N; ++i) perm[i] = static_cast<std::uint32_t>(i);
    }
    Philox4x32 master(ens.seed, stream_id(ens.step, 0xC0FFEEull));
    const double mean = 0.5 * static_cast<double>(N) * dt * m.lambda_major;
    const std::size_t pairs = std::min<std::size_t>(master.poisson(mean), N / 2);
    for (std::size_t i = 0; i < 2 * pairs; ++i) {
        const std::size_t j = i + master.below(N - i);
        std::swap(perm[i], perm[j]);
    }

    StepStats st;
    st.candidates = pairs;
    auto work = [&](std::size_t lo, std::size_t hi) {
        std::uint64_t acc = 0;
        const auto key = Philox4x32::key_of(ens.seed);
        for (std::size_t k = lo; k < hi; ++k)
            if (detail::process_pair(ens.v[perm[2 * k]], ens.v[perm[2 * k + 1]], m, key, ens.step,
                                     static_cast<std::uint32_t>(k)))
                ++acc;
        return acc;
    };
    if (workers <= 1 || pairs < 2048) {
        st.accepted = work(0, pairs);
    } else {
        std::vector<std::uint64_t> counts(workers, 0);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t lo = pairs * w / workers, hi = pairs * (w + 1) / workers;
            pool.emplace_back([&, w, lo, hi] { counts[w] = work(lo, hi); });
        }
        for (auto& t : pool) t.join();
        for (auto c : counts) st.accepted += c;
    }
    ++ens.step;
    ens.time += dt;
    return st;
}

struct MomentVector {
    std::vector<double> orders;
    std::vector<double> M;  ///< M_l = (1/N) sum <v_i>^l
    double energy = 0.0;    ///< (1/N) sum |v_i|^2
    Vec3 momentum{};        ///< (1/N) sum v_i
};

/// Moments by fixed-size blocks summed in index order, so the result does not depend on threading.
inline MomentVector moments(const ParticleEnsemble& ens, const std::vector<double>& orders) {
    MomentVector out;
    out.orders = orders;
    out.M.assign(orders.size(), 0.0);
    std::vector<quad::Sum> ms(orders.size());
    quad::Sum e, px, py, pz;
    for (const auto& v : ens.v) {
        const double r2 = norm2(v);
        const double b2 = 1.0 + r2;
        for (std::size_t k = 0; k < orders.size(); ++k) {
            const double l = orders[k];
            ms[k].add(l == 0.0 ? 1.0 : (l == 2.0 ? b2 : std::pow(b2, 0.5 * l)));
        }
        e.add(r2);
        px.add(v.x);
        py.add(v.y);
        pz.add(v.z);
    }
    const double inv = 1.0 / static_cast<double>(ens.size());
    for (std::size_t k = 0; k < orders.size(); ++k) out.M[k] = ms[k].value() * inv;
    out.energy = e.value() * inv;
    out.momentum = {px.value() * inv, py.value() * inv, pz.value() * inv};
    return out;
}

struct MomentSeries {
    std::vector<double> orders;
    std::vector<double> times;
    std::vector<std::vector<double>> M;  ///< M[k][i]: order orders[k] at times[i]
    std::vector<double> energy;
    std::vector<Vec3> momentum;
    std::vector<std::uint64_t> collisions;  ///< cumulative accepted collisions

    std::size_t size() const noexcept { return times.size(); }

    void record(double t, const MomentVector& mv, std::uint64_t ncoll) {
        if (M.empty()) {
            orders = mv.orders;
            M.resize(orders.size());
        }
        times.push_back(t);
        for (std::size_t k = 0; k < orders.size(); ++k) M[k].push_back(mv.M[k]);
        energy.push_back(mv.energy);
        momentum.push_back(mv.momentum);
        collisions.push_back(ncoll);
    }

    const std::vector<double>& order(double l) const {
        for (std::size_t k = 0; k < orders.size(); ++k)
            if (orders[k] == l) return M[k];
        throw DomainError("moment order " + std::to_string(l) + " was not recorded");
    }
};

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string order_label(double l) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "M%g", l);
    return buf;
}

/// CSV with header t,M<l>...,E,px,py,pz,collisions.
inline void write_series_csv(const MomentSeries& s, std::ostream& os) {
    os << "t";
    for (double l : s.orders) os << ',' << order_label(l);
    os << ",E,px,py,pz,collisions\r\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << format_double(s.times[i]);
        for (std::size_t k = 0; k < s.orders.size(); ++k) os << ',' << format_double(s.M[k][i]);
        os << ',' << format_double(s.energy[i]) << ',' << format_double(s.momentum[i].x) << ','
           << format_double(s.momentum[i].y) << ',' << format_double(s.momentum[i].z) << ',' << s.collisions[i]
           << "\r\n";
    }
}

inline constexpr std::uint32_t snapshot_version = 1;

/// Little-endian binary: "IBND", u32 version, u64 N, f64 time, u64 seed, then 3N f64.
inline void write_snapshot(const ParticleEnsemble& ens, std::ostream& os) {
    static_assert(std::endian::native == std::endian::little, "snapshot writer assumes a little-endian host");
    const std::uint64_t n = ens.size();
    os.write("IBND", 4);
    os.write(reinterpret_cast<const char*>(&snapshot_version), 4);
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(&ens.time), 8);
    os.write(reinterpret_cast<const char*>(&ens.seed), 8);
    for (const auto& v : ens.v) {
        const double c[3] = {v.x, v.y, v.z};
        os.write(reinterpret_cast<const char*>(c), sizeof c);
    }
    if (!os) throw std::runtime_error("snapshot write failed");
}

inline ParticleEnsemble read_snapshot(std::istream& is) {
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t n = 0;
    ParticleEnsemble ens;
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "IBND", 4) != 0) throw ConfigError("not an IBND snapshot");
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != snapshot_version) throw ConfigError("unsupported snapshot version");
    is.read(reinterpret_cast<char*>(&n), 8);
    is.read(reinterpret_cast<char*>(&ens.time), 8);
    is.read(reinterpret_cast<char*>(&ens.seed), 8);
    ens.v.resize(n);
    for (auto& v : ens.v) {
        double c[3];
        is.read(reinterpret_cast<char*>(c), sizeof c);
        v = {c[0], c[1], c[2]};
    }
    if (!is) throw ConfigError("truncated snapshot");
    return ens;
}

struct RunResult {
    MomentSeries series;
    double dt = 0.0;
    std::uint64_t steps = 0;
    std::uint64_t candidates = 0;
    std::uint64_t accepted = 0;
};

using SnapshotSink = std::function<void(const ParticleEnsemble&)>;

/// Evolves init_ensemble(cfg) to t_final with dt = t_final/ceil(t_final Lambda/dt_factor), recording
/// moments at the steps nearest each multiple of output_dt and at the final step.
inline RunResult run(const SimConfig& cfg, const SnapshotSink& sink = {}) {
    cfg.validate();
    const CollisionModel model(cfg);
    ParticleEnsemble ens = init_ensemble(cfg);
    RunResult out;
    const double dt_max = cfg.dt_factor / model.lambda_major;
    out.steps = cfg.t_final > 0.0 ? static_cast<std::uint64_t>(std::ceil(cfg.t_final / dt_max * (1.0 - 1e-12))) : 0;
    out.dt = out.steps ? cfg.t_final / static_cast<double>(out.steps) : dt_max;
    // records at the steps nearest the multiples of output_dt
    std::uint64_t next_record = 0, record_index = 0;
    auto advance_record = [&](std::uint64_t k) {
        while (next_record <= k)
            next_record = static_cast<std::uint64_t>(std::llround(static_cast<double>(++record_index) * cfg.output_dt / out.dt));
    };

    // each snapshot fires at the step nearest its requested time
    std::vector<std::uint64_t> snaps;
    for (double ts : cfg.snapshot_times)
        snaps.push_back(std::min<std::uint64_t>(out.steps, static_cast<std::uint64_t>(std::llround(ts / out.dt))));
    std::sort(snaps.begin(), snaps.end());
    std::size_t next_snap = 0;
    auto at_step = [&](std::uint64_t k) {
        ens.time = static_cast<double>(k) * out.dt;
        if (k == next_record || k == out.steps) {
            out.series.record(ens.time, moments(ens, cfg.moment_orders), out.accepted);
            advance_record(k);
        }
        for (; next_snap < snaps.size() && snaps[next_snap] == k; ++next_snap)
            if (sink) sink(ens);
    };
    at_step(0);
    std::vector<std::uint32_t> perm;
    for (std::uint64_t k = 1; k <= out.steps; ++k) {
        const auto st = step(ens, out.dt, model, perm, cfg.workers);
        out.candidates += st.candidates;
        out.accepted += st.accepted;
        at_step(k);
    }
    return out;
}

struct DissipationReport {
    double max_energy_increase = 0.0;  ///< max over consecutive records of (E_{i+1} - E_i)/E_0, floored at 0
    double max_above_initial = 0.0;    ///< max over records of (E_i - E_0)/E_0, floored at 0
    double max_momentum_drift = 0.0;   ///< max |p_i - p_0| (momentum per particle)
    bool strictly_decreasing = true;   ///< E_{i+1} < E_i wherever collisions happened in between
};

inline DissipationReport dissipation_check(const MomentSeries& s) {
    if (s.size() == 0) throw DomainError("dissipation_check needs a nonempty series");
    DissipationReport r;
    const double e0 = s.energy.front();
    const double scale = e0 > 0.0 ? e0 : 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        r.max_above_initial = std::max(r.max_above_initial, (s.energy[i] - e0) / scale);
        r.max_momentum_drift = std::max(r.max_momentum_drift, norm(s.momentum[i] - s.momentum.front()));
        if (i > 0) {
            r.max_energy_increase = std::max(r.max_energy_increase, (s.energy[i] - s.energy[i - 1]) / scale);
            if (s.collisions[i] > s.collisions[i - 1] && !(s.energy[i] < s.energy[i - 1])) r.strictly_decreasing = false;
        }
    }
    return r;
}

}  // namespace kinetics
