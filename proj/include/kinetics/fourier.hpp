#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "kinetics/dsmc.hpp"
#include "kinetics/errors.hpp"
#include "kinetics/kernels.hpp"
#include "kinetics/quadrature.hpp"
#include "kinetics/random.hpp"
#include "kinetics/vec3.hpp"

namespace kinetics {

using cplx = std::complex<double>;

struct CharFuncSample {
    std::vector<Vec3> xi_grid;
    std::vector<cplx> values;
};

/// Origin plus shells |xi| in {0.5, 1, 2} along the 26 cube directions (faces, edges, corners).
inline std::vector<Vec3> default_xi_grid() {
    std::vector<Vec3> grid{Vec3{}};
    for (double radius : {0.5, 1.0, 2.0})
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
                for (int k = -1; k <= 1; ++k) {
                    if (i == 0 && j == 0 && k == 0) continue;
                    grid.push_back(radius * normalized(Vec3{double(i), double(j), double(k)}));
                }
    return grid;
}

/// phi(xi) = (1/N) sum_j exp(-i v_j . xi), compensated sums per node.
inline CharFuncSample empirical_cf(const ParticleEnsemble& ens, const std::vector<Vec3>& xi_grid) {
    if (xi_grid.empty()) throw DomainError("empirical_cf needs a nonempty grid");
    if (ens.size() == 0) throw DomainError("empirical_cf needs particles");
    CharFuncSample out{xi_grid, {}};
    out.values.reserve(xi_grid.size());
    // dividing (not multiplying by 1/N) keeps phi(0) = 1 exact
    const double N = static_cast<double>(ens.size());
    for (const auto& xi : xi_grid) {
        quad::Sum re, im;
        for (const auto& v : ens.v) {
            const double x = dot(v, xi);
            re.add(std::cos(x));
            im.add(-std::sin(x));
        }
        out.values.emplace_back(re.value() / N, im.value() / N);
    }
    return out;
}

struct KAlphaDistance {
    double alpha = 0.0;
    double value = 0.0;
    Vec3 argmax_xi{};
};

/// sup over nonzero nodes of |phi - phi~| / |xi|^alpha.
inline KAlphaDistance kalpha_distance(const CharFuncSample& a, const CharFuncSample& b, double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha must lie in (0, 2]");
    if (a.xi_grid.size() != b.xi_grid.size() || a.values.size() != a.xi_grid.size() ||
        b.values.size() != b.xi_grid.size())
        throw DomainError("characteristic-function grids differ in size");
    KAlphaDistance d{alpha, 0.0, {}};
    for (std::size_t i = 0; i < a.xi_grid.size(); ++i) {
        if (!(a.xi_grid[i] == b.xi_grid[i])) throw DomainError("characteristic-function grids differ");
        const double r = norm(a.xi_grid[i]);
        if (r == 0.0) continue;
        const double q = std::abs(a.values[i] - b.values[i]) / std::pow(r, alpha);
        if (q > d.value) {
            d.value = q;
            d.argmax_xi = a.xi_grid[i];
        }
    }
    return d;
}

struct EquicontinuityReport {
    double modulus = 0.0;  ///< max |phi(t_{i+1}, xi) - phi(t_i, xi)| / (t_{i+1} - t_i)
    std::size_t interval = 0;
    Vec3 argmax_xi{};
};

inline EquicontinuityReport equicontinuity_diagnostic(const std::vector<CharFuncSample>& samples,
                                                      const std::vector<double>& times) {
    if (samples.size() < 2 || samples.size() != times.size())
        throw DomainError("equicontinuity_diagnostic needs >= 2 samples with matching times");
    EquicontinuityReport r;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const double dt = times[i + 1] - times[i];
        if (!(dt > 0.0)) throw DomainError("sample times must increase");
        const auto d = kalpha_distance(samples[i + 1], samples[i], 2.0);  // validates the grids
        (void)d;
        for (std::size_t k = 0; k < samples[i].values.size(); ++k) {
            const double m = std::abs(samples[i + 1].values[k] - samples[i].values[k]) / dt;
            if (m > r.modulus) {
                r.modulus = m;
                r.interval = i;
                r.argmax_xi = samples[i].xi_grid[k];
            }
        }
    }
    return r;
}

/// Phi_n^(zeta) = int Phi_n(|v|) exp(-i v.zeta) dv = 4 pi int_0^{2n} r^2 Phi_n(r) sinc(r |zeta|) dr.
///
/// Gauss-Legendre panels no longer than a half-period of the sine (and n/32, to resolve the
/// mollifier), split at r = n; the first panel uses r = h t^2 to smooth the r^(2+gamma) corner.
inline quad::Result phi_hat_n_detail(const MollifiedKineticKernel& kernel, double zeta) {
    if (!(zeta >= 0.0)) throw DomainError("|zeta| must be nonnegative");
    const double n = kernel.n();
    auto sinc = [](double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; };
    auto f = [&](double r) { return r * r * kernel(r) * sinc(r * zeta); };
    const double len = std::min(zeta > 0.0 ? std::numbers::pi / zeta : HUGE_VAL, n / 32.0);
    const auto m = static_cast<std::size_t>(std::ceil(n / len));
    const double h = n / static_cast<double>(m);
    quad::Sum val, err;
    auto add = [&](double a, double b) {
        const double v20 = quad::gauss<20>(f, a, b), v10 = quad::gauss<10>(f, a, b);
        val.add(v20);
        err.add(std::abs(v20 - v10));
    };
    {
        auto g = [&](double t) { return f(h * t * t) * 2.0 * h * t; };
        const double v20 = quad::gauss<20>(g, 0.0, 1.0), v10 = quad::gauss<10>(g, 0.0, 1.0);
        val.add(v20);
        err.add(std::abs(v20 - v10));
    }
    for (std::size_t k = 1; k < m; ++k) add(h * static_cast<double>(k), h * static_cast<double>(k + 1));
    for (std::size_t k = 0; k < m; ++k) add(n + h * static_cast<double>(k), n + h * static_cast<double>(k + 1));
    const double c = 4.0 * std::numbers::pi;
    return {c * val.value(), c * err.value()};
}

inline double phi_hat_n(const MollifiedKineticKernel& kernel, double zeta) {
    if (!(zeta > 0.0)) throw DomainError("phi_hat_n needs zeta != 0");
    return phi_hat_n_detail(kernel, zeta).value;
}

/// Large-|zeta| behaviour set by the r^(1+gamma) corner at the origin:
/// Phi_n^(zeta) ~ -4 pi Gamma(2+gamma) sin(pi gamma/2) |zeta|^-(3+gamma). Zero for gamma = 2.
inline double phi_hat_asymptotic_constant(double gamma) {
    return -4.0 * std::numbers::pi * std::tgamma(2.0 + gamma) * std::sin(0.5 * std::numbers::pi * gamma);
}

struct DecayReport {
    double gamma = 0.0, n = 0.0;
    std::vector<double> zeta, phi_hat, ratio;  ///< ratio = |Phi_n^| <zeta>^(3+gamma)
    std::vector<double> d1_ratio;              ///< |d/dzeta Phi_n^| <zeta>^(4+gamma), central differences
    double fitted_constant = 0.0;              ///< max ratio on the grid
    double d1_constant = 0.0;
    double head_max = 0.0, tail_max = 0.0;     ///< max ratio below / within the last decade
    double d1_head_max = 0.0, d1_tail_max = 0.0;
    double asymptotic_constant = 0.0;          ///< |-4 pi Gamma(2+gamma) sin(pi gamma/2)|
    bool all_finite = true;

    /// Bounded on the grid and not growing in the last decade.
    bool bounded() const { return all_finite && tail_max <= head_max && d1_tail_max <= d1_head_max; }
};

inline DecayReport lemma25_decay(const MollifiedKineticKernel& kernel, double zmin = 0.1, double zmax = 1e3,
                                 int points = 200) {
    if (!(zmin > 0.0 && zmax > zmin && points >= 2)) throw DomainError("bad decay grid");
    DecayReport rep;
    rep.gamma = kernel.gamma();
    rep.n = kernel.n();
    rep.asymptotic_constant = std::abs(phi_hat_asymptotic_constant(rep.gamma));
    const double tail_start = zmax / 10.0;
    for (int i = 0; i < points; ++i) {
        const double z = zmin * std::pow(zmax / zmin, static_cast<double>(i) / (points - 1));
        const double v = phi_hat_n(kernel, z);
        const double br2 = 1.0 + z * z;
        const double ratio = std::abs(v) * std::pow(br2, 0.5 * (3.0 + rep.gamma));
        const double hstep = 1e-3 * z;
        const double d1 = (phi_hat_n(kernel, z + hstep) - phi_hat_n(kernel, z - hstep)) / (2.0 * hstep);
        const double d1_ratio = std::abs(d1) * std::pow(br2, 0.5 * (4.0 + rep.gamma));
        rep.zeta.push_back(z);
        rep.phi_hat.push_back(v);
        rep.ratio.push_back(ratio);
        rep.d1_ratio.push_back(d1_ratio);
        if (!std::isfinite(ratio) || !std::isfinite(d1_ratio)) rep.all_finite = false;
        rep.fitted_constant = std::max(rep.fitted_constant, ratio);
        rep.d1_constant = std::max(rep.d1_constant, d1_ratio);
        if (z >= tail_start * (1.0 - 1e-12)) {
            rep.tail_max = std::max(rep.tail_max, ratio);
            rep.d1_tail_max = std::max(rep.d1_tail_max, d1_ratio);
        } else {
            rep.head_max = std::max(rep.head_max, ratio);
            rep.d1_head_max = std::max(rep.d1_head_max, d1_ratio);
        }
    }
    return rep;
}

/// Gaussian characteristic function exp(-i m.xi - xi^T C xi / 2).
struct GaussianModel {
    Vec3 mean{};
    std::array<std::array<double, 3>, 3> cov{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

    static GaussianModel isotropic(double T) {
        GaussianModel g;
        g.cov = {{{T, 0, 0}, {0, T, 0}, {0, 0, T}}};
        return g;
    }

    double quadratic(const Vec3& x) const {
        const double a[3] = {x.x, x.y, x.z};
        double q = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) q += a[i] * cov[i][j] * a[j];
        return q;
    }

    cplx operator()(const Vec3& xi) const { return std::exp(cplx(-0.5 * quadratic(xi), -dot(mean, xi))); }

    /// Smallest covariance eigenvalue, bounded below by Gershgorin's theorem.
    double lambda_min() const {
        double lo = HUGE_VAL;
        for (int i = 0; i < 3; ++i) {
            double off = 0.0;
            for (int j = 0; j < 3; ++j)
                if (j != i) off += std::abs(cov[i][j]);
            lo = std::min(lo, cov[i][i] - off);
        }
        if (!(lo > 0.0)) {
            // fall back to the trace/3 scale if Gershgorin is inconclusive
            lo = (cov[0][0] + cov[1][1] + cov[2][2]) / 3.0 * 0.25;
        }
        return lo;
    }

    /// Radius beyond which the zeta integrand of the Bobylev form is below exp(-36) of its peak.
    double decay_radius(double xi_norm) const { return xi_norm + std::sqrt(36.0 / lambda_min()); }
};

/// Mean and covariance of an ensemble.
inline GaussianModel fit_gaussian(const ParticleEnsemble& ens) {
    if (ens.size() < 2) throw DomainError("fit_gaussian needs at least two particles");
    GaussianModel g;
    const auto mv = moments(ens, {});
    g.mean = mv.momentum;
    std::array<std::array<quad::Sum, 3>, 3> acc{};
    for (const auto& v : ens.v) {
        const Vec3 d = v - g.mean;
        const double a[3] = {d.x, d.y, d.z};
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) acc[i][j].add(a[i] * a[j]);
    }
    const double inv = 1.0 / static_cast<double>(ens.size());
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) g.cov[i][j] = g.cov[j][i] = acc[i][j].value() * inv;
    return g;
}

/// Phi_n^ at Gauss-Legendre nodes of [0, R] and a discrete law on the nodes for importance
/// sampling |zeta|.
struct PhiHatTable {
    std::vector<double> r, w, value, cdf;
    std::vector<double> weight;  ///< Phi_n^(r_k) r_k^2 w_k / p_k for the sampling law p
    double S = 0.0;  ///< sum_k Phi_n^(r_k) r_k^2 w_k, so that 4 pi S approximates the integral over |zeta| <= R

    /// Nodes are drawn with probability proportional to |Phi_n^(r)| r^2 w min(1, (r/ell)^2): the
    /// estimator differences vanish to second order at zeta = 0, so small radii need fewer draws.
    PhiHatTable(const MollifiedKineticKernel& kernel, double radius, double ell = 1.0) {
        const double width = std::min(0.05, 0.5 / kernel.n());
        const auto panels = static_cast<std::size_t>(std::ceil(radius / width));
        const double h = radius / static_cast<double>(panels);
        const auto& rule = boost::math::quadrature::gauss<double, 8>::abscissa();
        const auto& wts = boost::math::quadrature::gauss<double, 8>::weights();
        for (std::size_t p = 0; p < panels; ++p) {
            const double mid = h * (static_cast<double>(p) + 0.5), half = 0.5 * h;
            for (std::size_t i = 0; i < rule.size(); ++i) {
                // the stored rule is symmetric: nonnegative abscissae only, zero first
                for (int sgn : {-1, 1}) {
                    if (rule[i] == 0.0 && sgn < 0) continue;
                    r.push_back(mid + sgn * half * rule[i]);
                    w.push_back(half * wts[i]);
                }
            }
        }
        value.resize(r.size());
        cdf.resize(r.size());
        weight.resize(r.size());
        quad::Sum acc, signed_acc;
        auto damp = [&](double x) { return std::min(1.0, (x / ell) * (x / ell)); };
        for (std::size_t k = 0; k < r.size(); ++k) {
            value[k] = phi_hat_n_detail(kernel, r[k]).value;
            acc.add(std::abs(value[k]) * r[k] * r[k] * w[k] * damp(r[k]));
            signed_acc.add(value[k] * r[k] * r[k] * w[k]);
            cdf[k] = acc.value();
        }
        const double Z = acc.value();
        S = signed_acc.value();
        for (std::size_t k = 0; k < r.size(); ++k) weight[k] = (value[k] < 0.0 ? -Z : Z) / damp(r[k]);
        for (auto& c : cdf) c /= Z;
        cdf.back() = 1.0;
    }

    std::size_t sample(double u) const {
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    }
};

/// The cutoff kernels in the form the Bobylev estimator consumes.
template <AngularKernelLike Base = AngularKernel>
struct BobylevKernels {
    CutoffAngularKernel<Base> bn;
    MollifiedKineticKernel phin;
    ThetaSampler<Base> theta;
    PhiHatTable table;

    /// `zeta_radius` bounds the sampled |zeta|; see GaussianModel::decay_radius.
    BobylevKernels(CutoffAngularKernel<Base> bn_, MollifiedKineticKernel phin_, double zeta_radius)
        : bn(std::move(bn_)), phin(phin_), theta(bn), table(phin, zeta_radius) {}
};

struct BobylevOptions {
    std::uint64_t seed = 1;
    unsigned batches = 64;
    unsigned samples_per_batch = 2000;  ///< (sigma, zeta direction) draws per batch
    unsigned radii = 16;                ///< stratified |zeta| draws per direction
    double max_stderr = HUGE_VAL;       ///< estimates with a larger standard error are flagged
};

struct BobylevEstimate {
    cplx value{};
    double stderr_re = 0.0;
    double stderr_im = 0.0;
    bool flagged = false;
};

/// Monte Carlo estimate of the right side of the inelastic Bobylev identity,
///   (2 pi)^-3 int_S2 b_n(xi.sigma/|xi|) int_R3 Phi_n^(zeta)
///       [phi(xi+ - zeta) phi(xi- + zeta) - phi(zeta) phi(xi - zeta)] dzeta dsigma,
/// xi+ = (1/2 + a-/2) xi + (a+/2)|xi| sigma, xi- = (1/2 - a-/2) xi - (a+/2)|xi| sigma.
/// sigma is stratified in theta about xi and the direction of zeta is uniform. For each pair of
/// directions, `radii` values of |zeta| are drawn from `table`, one per quantile stratum. The standard
/// error comes from the spread of independent batch means.
template <class Model, AngularKernelLike Base>
BobylevEstimate bobylev_rhs(const Model& phi, const Vec3& xi, const BobylevKernels<Base>& kern,
                            const Restitution& rest, const BobylevOptions& opt = {}) {
    if (opt.batches < 2 || opt.samples_per_batch == 0 || opt.radii == 0)
        throw DomainError("bobylev_rhs needs >= 2 batches and positive sample counts");
    const double xn = norm(xi);
    const Vec3 xhat = xn > 0.0 ? xi / xn : Vec3{0, 0, 1};
    const Vec3 e1 = any_orthogonal(xhat);
    const Vec3 e2 = cross(xhat, e1);
    const auto& table = kern.table;
    const double mass = 2.0 * std::numbers::pi * kern.theta.total();
    const double scale = mass * 4.0 * std::numbers::pi / std::pow(2.0 * std::numbers::pi, 3);
    const unsigned M = opt.samples_per_batch, R = opt.radii;

    std::vector<cplx> means(opt.batches);
    for (unsigned b = 0; b < opt.batches; ++b) {
        Philox4x32 g(opt.seed, stream_id(0xB0B1ull, b));
        quad::Sum re, im;
        for (unsigned j = 0; j < M; ++j) {
            const double th = kern.theta((j + g.uniform()) / M);
            const double ph = 2.0 * std::numbers::pi * g.uniform();
            const double st = std::sin(th);
            const Vec3 sigma = std::cos(th) * xhat + (st * std::cos(ph)) * e1 + (st * std::sin(ph)) * e2;
            const Vec3 xp = (0.5 + 0.5 * rest.a_minus) * xi + (0.5 * rest.a_plus * xn) * sigma;
            const Vec3 xm = (0.5 - 0.5 * rest.a_minus) * xi - (0.5 * rest.a_plus * xn) * sigma;
            if (norm(xp + xm - xi) > 1e-12 * std::max(1.0, xn))
                throw InvariantError("xi+ + xi- = xi", std::to_string(norm(xp + xm - xi)));
            auto bracket = [&](const Vec3& z) { return phi(xp - z) * phi(xm + z) - phi(z) * phi(xi - z); };
            const cplx b0 = bracket(Vec3{});
            const double u1 = g.uniform(), u2 = g.uniform();
            const Vec3 omega = detail::unit_from(u1, u2);
            // Phi_n^ integrates to zero, so subtracting b0 leaves the mean unchanged up to S b0;
            // averaging +zeta and -zeta cancels the odd part
            cplx acc{};
            for (unsigned i = 0; i < R; ++i) {
                const std::size_t k = table.sample((i + g.uniform()) / R);
                const Vec3 zeta = table.r[k] * omega;
                acc += table.weight[k] * (0.5 * (bracket(zeta) + bracket(-zeta)) - b0);
            }
            const cplx x = acc / static_cast<double>(R) + table.S * b0;
            re.add(x.real());
            im.add(x.imag());
        }
        means[b] = scale * cplx(re.value(), im.value()) / static_cast<double>(M);
    }
    BobylevEstimate est;
    quad::Sum mr, mi;
    for (const auto& m : means) {
        mr.add(m.real());
        mi.add(m.imag());
    }
    const double B = opt.batches;
    est.value = cplx(mr.value() / B, mi.value() / B);
    quad::Sum vr, vi;
    for (const auto& m : means) {
        vr.add((m.real() - est.value.real()) * (m.real() - est.value.real()));
        vi.add((m.imag() - est.value.imag()) * (m.imag() - est.value.imag()));
    }
    est.stderr_re = std::sqrt(vr.value() / (B - 1.0) / B);
    est.stderr_im = std::sqrt(vi.value() / (B - 1.0) / B);
    est.flagged = std::max(est.stderr_re, est.stderr_im) > opt.max_stderr;
    return est;
}

}  // namespace kinetics

namespace kinetics {

/// Finite-difference d phi / dt from DSMC replicates against the Bobylev right side on a Gaussian
/// fit of the pooled ensemble.
struct ResidualOptions {
    double e = 0.8, gamma = 1.0, s = 0.25, K = 1.0, n = 8.0;
    double T = 1.0;               ///< initial maxwellian temperature
    std::size_t N = 62500;        ///< particles per replicate
    unsigned replicates = 32;
    double delta = 0.01;          ///< finite-difference step
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::vector<Vec3> probes{{0.5, 0, 0}, {0, 0.6, 0.8}, {0.9, 0.9, 0.6}, {1.2, -0.9, 1.0}, {0, -2.0, 0}};
    BobylevOptions bobylev{};
};

struct ResidualProbe {
    Vec3 xi{};
    cplx fd{}, rhs{};
    double fd_se_re = 0, fd_se_im = 0, rhs_se_re = 0, rhs_se_im = 0;
    double z_re = 0, z_im = 0;  ///< (fd - rhs) / combined standard error, per component
    bool flagged = false;
};

struct ResidualReport {
    std::vector<ResidualProbe> probes;
    double delta_actual = 0.0;  ///< time between the two snapshots
    GaussianModel fit0, fit1;
};

inline ResidualReport bobylev_residual(const ResidualOptions& opt) {
    if (opt.replicates < 2 || opt.probes.empty() || !(opt.delta > 0.0))
        throw DomainError("bobylev_residual needs >= 2 replicates, probes and delta > 0");
    const std::size_t P = opt.probes.size();
    std::vector<std::vector<cplx>> fd(opt.replicates, std::vector<cplx>(P));
    std::vector<std::array<std::array<quad::Sum, 3>, 3>> second(2);
    std::vector<std::array<quad::Sum, 3>> first(2);
    ResidualReport rep;
    for (unsigned r = 0; r < opt.replicates; ++r) {
        SimConfig c;
        c.e = opt.e;
        c.gamma = opt.gamma;
        c.s = opt.s;
        c.K = opt.K;
        c.n = opt.n;
        c.N = opt.N;
        c.t_final = opt.delta;
        c.output_dt = opt.delta;
        c.seed = stream_id(opt.seed, r);
        c.init.T = opt.T;
        c.snapshot_times = {0.0, opt.delta};
        c.workers = opt.workers;
        std::vector<CharFuncSample> snaps;
        std::vector<double> times;
        run(c, [&](const ParticleEnsemble& ens) {
            const std::size_t i = snaps.size();
            snaps.push_back(empirical_cf(ens, opt.probes));
            times.push_back(ens.time);
            for (const auto& v : ens.v) {
                const double a[3] = {v.x, v.y, v.z};
                for (int p = 0; p < 3; ++p) {
                    first[i][p].add(a[p]);
                    for (int q = p; q < 3; ++q) second[i][p][q].add(a[p] * a[q]);
                }
            }
        });
        if (snaps.size() != 2) throw InvariantError("two snapshots per replicate", std::to_string(snaps.size()));
        rep.delta_actual = times[1] - times[0];
        for (std::size_t k = 0; k < P; ++k) fd[r][k] = (snaps[1].values[k] - snaps[0].values[k]) / rep.delta_actual;
    }
    // pooled mean and covariance at both times
    const double total = static_cast<double>(opt.N) * opt.replicates;
    GaussianModel fits[2];
    for (int i = 0; i < 2; ++i) {
        const Vec3 m{first[i][0].value() / total, first[i][1].value() / total, first[i][2].value() / total};
        const double a[3] = {m.x, m.y, m.z};
        fits[i].mean = m;
        for (int p = 0; p < 3; ++p)
            for (int q = p; q < 3; ++q) fits[i].cov[p][q] = fits[i].cov[q][p] = second[i][p][q].value() / total - a[p] * a[q];
    }
    rep.fit0 = fits[0];
    rep.fit1 = fits[1];

    const CutoffAngularKernel<> bn(AngularKernel(opt.s, opt.K), opt.n);
    const MollifiedKineticKernel phin(opt.gamma, opt.n);
    const Restitution rest(opt.e);
    double xmax = 0.0;
    for (const auto& x : opt.probes) xmax = std::max(xmax, norm(x));
    const BobylevKernels<> kern(bn, phin, std::max(fits[0].decay_radius(xmax), fits[1].decay_radius(xmax)));

    const double R = opt.replicates;
    for (std::size_t k = 0; k < P; ++k) {
        ResidualProbe pr;
        pr.xi = opt.probes[k];
        quad::Sum mr, mi;
        for (unsigned r = 0; r < opt.replicates; ++r) {
            mr.add(fd[r][k].real());
            mi.add(fd[r][k].imag());
        }
        pr.fd = cplx(mr.value() / R, mi.value() / R);
        quad::Sum vr, vi;
        for (unsigned r = 0; r < opt.replicates; ++r) {
            vr.add(std::norm(fd[r][k].real() - pr.fd.real()));
            vi.add(std::norm(fd[r][k].imag() - pr.fd.imag()));
        }
        pr.fd_se_re = std::sqrt(vr.value() / (R - 1.0) / R);
        pr.fd_se_im = std::sqrt(vi.value() / (R - 1.0) / R);
        // trapezoid over [0, delta]; the two estimates share no random numbers
        BobylevOptions bo = opt.bobylev;
        bo.seed = stream_id(opt.bobylev.seed, 2 * k);
        const auto a = bobylev_rhs(fits[0], pr.xi, kern, rest, bo);
        bo.seed = stream_id(opt.bobylev.seed, 2 * k + 1);
        const auto b = bobylev_rhs(fits[1], pr.xi, kern, rest, bo);
        pr.rhs = 0.5 * (a.value + b.value);
        pr.rhs_se_re = 0.5 * std::hypot(a.stderr_re, b.stderr_re);
        pr.rhs_se_im = 0.5 * std::hypot(a.stderr_im, b.stderr_im);
        pr.flagged = a.flagged || b.flagged;
        pr.z_re = (pr.fd.real() - pr.rhs.real()) / std::hypot(pr.fd_se_re, pr.rhs_se_re);
        pr.z_im = (pr.fd.imag() - pr.rhs.imag()) / std::hypot(pr.fd_se_im, pr.rhs_se_im);
        rep.probes.push_back(pr);
    }
    return rep;
}

}  // namespace kinetics
