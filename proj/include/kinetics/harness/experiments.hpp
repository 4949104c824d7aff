#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kinetics/dsmc.hpp"
#include "kinetics/fourier.hpp"
#include "kinetics/harness/config.hpp"
#include "kinetics/harness/manifest.hpp"
#include "kinetics/kernels.hpp"
#include "kinetics/povzner.hpp"
#include "kinetics/random.hpp"

namespace kinetics::harness {

namespace fs = std::filesystem;

/// One numeric verdict: `measured relation threshold`.
struct Check {
    std::string name;
    std::string criterion;  ///< acceptance criterion number, or "" for a diagnostic
    double measured = 0.0;
    std::string relation;   ///< "<=", "<" or ">="
    double threshold = 0.0;
    bool pass = false;
    std::string detail;

    static Check make(std::string name, std::string criterion, double measured, std::string relation, double threshold,
                      std::string detail = {}) {
        Check c{std::move(name), std::move(criterion), measured, std::move(relation), threshold, false, std::move(detail)};
        if (c.relation == "<=") c.pass = measured <= threshold;
        else if (c.relation == "<") c.pass = measured < threshold;
        else if (c.relation == ">=") c.pass = measured >= threshold;
        else throw DomainError("unknown relation " + c.relation);
        if (std::isnan(measured)) c.pass = false;
        return c;
    }

    json to_json() const {
        return {{"name", name},       {"criterion", criterion}, {"measured", measured}, {"relation", relation},
                {"threshold", threshold}, {"pass", pass},        {"detail", detail}};
    }

    static Check from_json(const json& j) {
        Check c;
        c.name = j.value("name", "");
        c.criterion = j.value("criterion", "");
        c.measured = j.at("measured").is_number() ? j.at("measured").get<double>() : std::nan("");
        c.relation = j.value("relation", "");
        c.threshold = j.value("threshold", 0.0);
        c.pass = j.value("pass", false);
        c.detail = j.value("detail", "");
        return c;
    }
};

struct Outcome {
    std::vector<Check> checks;
    std::vector<std::string> files;  ///< data artifacts, relative to the run directory
    json summary = json::object();

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

namespace detail {

inline std::string fmt(double x) { return format_double(x); }

inline std::string fmt_g(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// RFC-4180 writer: header row, CRLF line ends.
class Csv {
  public:
    explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

    void row(const std::vector<double>& values) {
        std::vector<std::string> s;
        s.reserve(values.size());
        for (double v : values) s.push_back(fmt(v));
        row_strings(s);
    }

    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << csv_field(cells[i]);
        }
        os_ << "\r\n";
    }

    std::string str() const { return os_.str(); }

  private:
    std::ostringstream os_;
};

/// Runs fn(i) for i in [0, count) on `workers` threads; fn writes only to slot i.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 random_unit(Philox4x32& g) {
    const double u1 = g.uniform(), u2 = g.uniform();
    return kinetics::detail::unit_from(u1, u2);
}

inline void save(const fs::path& dir, const std::string& name, const std::string& text, Outcome& out) {
    write_text(dir / name, text);
    out.files.push_back(name);
}

inline json pair_json(const VelocityPair& p) { return {{"v", vec_json(p.v)}, {"v_star", vec_json(p.v_star)}}; }

inline std::string describe(const PovznerPoint& p) {
    std::ostringstream os;
    os << to_string(p.kind) << " e=" << p.e << " kappa=" << p.kappa << " n=" << p.n << " v=(" << p.pair.v.x << ","
       << p.pair.v.y << "," << p.pair.v.z << ") v*=(" << p.pair.v_star.x << "," << p.pair.v_star.y << ","
       << p.pair.v_star.z << ")";
    return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// kernel_report

inline Outcome run_kernel_report(const KernelReportParams& p, const fs::path& dir) {
    Outcome out;
    const AngularKernel base(p.s, p.K);
    std::vector<CutoffAngularKernel<>> cut;
    for (double n : p.n) cut.emplace_back(base, n);

    std::vector<std::string> header{"theta", "b"};
    for (double n : p.n) header.push_back("bn_n" + detail::fmt_g(n));
    detail::Csv bcsv(header);
    double cap_excess = 0.0, min_mismatch = 0.0;
    for (int i = 0; i < p.theta_points; ++i) {
        const double th = half_pi * std::pow(1e-4, 1.0 - static_cast<double>(i) / (p.theta_points - 1));
        const double b = eval_b(base, th);
        std::vector<double> row{th, b};
        for (std::size_t k = 0; k < cut.size(); ++k) {
            const double bn = cut[k].bn(th);
            row.push_back(bn);
            cap_excess = std::max(cap_excess, bn - p.n[k]);
            min_mismatch = std::max(min_mismatch, std::abs(bn - std::min(b, p.n[k])) / std::min(b, p.n[k]));
        }
        bcsv.row(row);
    }
    detail::save(dir, "kernels_bn.csv", bcsv.str(), out);

    std::vector<std::string> rh{"r"};
    for (double n : p.n) rh.push_back("phin_n" + detail::fmt_g(n));
    detail::Csv rcsv(rh);
    const double rmax = 2.5 * *std::max_element(p.n.begin(), p.n.end());
    double inner = 0.0, outer = 0.0;
    for (int i = 0; i < p.r_points; ++i) {
        const double r = rmax * i / (p.r_points - 1);
        std::vector<double> row{r};
        for (double n : p.n) {
            const MollifiedKineticKernel k(p.gamma, n);
            const double v = k(r);
            row.push_back(v);
            if (r <= n && r > 0.0) inner = std::max(inner, std::abs(v - std::pow(r, p.gamma)) / std::pow(r, p.gamma));
            if (r >= 2.0 * n) outer = std::max(outer, std::abs(v));
        }
        rcsv.row(row);
    }
    detail::save(dir, "kernels_phin.csv", rcsv.str(), out);

    json cut_json = json::array();
    for (std::size_t k = 0; k < cut.size(); ++k)
        cut_json.push_back({{"n", p.n[k]}, {"theta_cap", cut[k].theta_cap()}, {"sphere_mass_bn", sphere_mass_bn(cut[k])}});
    json weighted = json::array();
    for (double a : p.alpha0) weighted.push_back({{"alpha0", a}, {"value", weighted_angular_integral(base, a)}});
    out.summary["cutoff"] = cut_json;
    out.summary["weighted_angular_integral"] = weighted;

    out.checks.push_back(Check::make("b_n never exceeds n", "", cap_excess, "<=", 0.0));
    out.checks.push_back(Check::make("b_n = min(b, n) on the grid (relative)", "", min_mismatch, "<=", 1e-15));
    out.checks.push_back(Check::make("Phi_n = r^gamma on (0, n] (relative)", "", inner, "<=", 1e-15));
    out.checks.push_back(Check::make("Phi_n = 0 beyond 2n", "", outer, "<=", 0.0));
    return out;
}

// ---------------------------------------------------------------------------------------------
// povzner_sweep

struct PovznerSweepResult {
    std::vector<PovznerPoint> route;
    std::vector<PovznerPoint> grid;
    struct Cell {
        WeightKind kind;
        double e, kappa;
        FittedConstants c;
        double min_margin_H = HUGE_VAL, min_margin_G = HUGE_VAL;  ///< normalized by the size of each side
        std::size_t first = 0, count = 0;                           ///< range in `grid`
    };
    std::vector<Cell> cells;
    std::vector<double> margin_H, margin_G;  ///< per grid point, raw slack
};

/// Criterion 1: both routes on random tuples. |v|, |v*| log-uniform on [0.1, 10].
inline std::vector<PovznerPoint> povzner_route_tuples(const PovznerParams& p, std::uint64_t seed, unsigned workers) {
    std::vector<PovznerPoint> pts(static_cast<std::size_t>(p.route_tuples));
    const AngularKernel base(p.s, p.K);
    detail::parallel_for(pts.size(), workers, [&](std::size_t i) {
        Philox4x32 g(seed, stream_id(0x9011ull, i));
        const double e = p.e[g.below(static_cast<std::uint32_t>(p.e.size()))];
        const double kappa = p.kappa[g.below(static_cast<std::uint32_t>(p.kappa.size()))];
        const double n = p.n[g.below(static_cast<std::uint32_t>(p.n.size()))];
        const auto kind = weight_kind_from_string(p.weights[g.below(static_cast<std::uint32_t>(p.weights.size()))]);
        const double a = std::pow(10.0, 2.0 * g.uniform() - 1.0), b = std::pow(10.0, 2.0 * g.uniform() - 1.0);
        const Vec3 u = detail::random_unit(g), w = detail::random_unit(g);
        pts[i] = evaluate_point(VelocityPair{a * u, b * w}, kind, kappa, e, CutoffAngularKernel<>(base, n), true);
    });
    return pts;
}

/// Criteria 3 and 4: the magnitude-pair grid per (weight, e, kappa) cell, pooled over n.
inline PovznerSweepResult povzner_grid(const PovznerParams& p, std::uint64_t seed, unsigned workers) {
    PovznerSweepResult res;
    const AngularKernel base(p.s, p.K);
    std::vector<CutoffAngularKernel<>> cut;
    for (double n : p.n) cut.emplace_back(base, n);
    struct Task {
        WeightKind kind;
        double e, kappa;
        std::size_t ni;
        VelocityPair pair;
    };
    std::vector<Task> tasks;
    std::uint64_t cell_index = 0;
    for (const auto& wname : p.weights)
        for (double e : p.e)
            for (double kappa : p.kappa) {
                PovznerSweepResult::Cell cell{weight_kind_from_string(wname), e, kappa, {}, HUGE_VAL, HUGE_VAL,
                                              tasks.size(), 0};
                Philox4x32 g(seed, stream_id(0x9012ull, cell_index++));
                for (std::size_t ni = 0; ni < p.n.size(); ++ni)
                    for (double a : p.magnitudes)
                        for (double b : p.magnitudes)
                            for (int d = 0; d < p.directions; ++d) {
                                const Vec3 u = detail::random_unit(g), w = detail::random_unit(g);
                                tasks.push_back({cell.kind, e, kappa, ni, VelocityPair{a * u, b * w}});
                            }
                cell.count = tasks.size() - cell.first;
                res.cells.push_back(cell);
            }
    res.grid.resize(tasks.size());
    detail::parallel_for(tasks.size(), workers, [&](std::size_t i) {
        const auto& t = tasks[i];
        res.grid[i] = evaluate_point(t.pair, t.kind, t.kappa, t.e, cut[t.ni], false);
    });
    res.margin_H.resize(res.grid.size());
    res.margin_G.resize(res.grid.size());
    for (auto& cell : res.cells) {
        const std::vector<PovznerPoint> pts(res.grid.begin() + static_cast<std::ptrdiff_t>(cell.first),
                                            res.grid.begin() + static_cast<std::ptrdiff_t>(cell.first + cell.count));
        cell.c = fit_constants(pts);
        if (!cell.c.feasible) continue;
        for (std::size_t i = cell.first; i < cell.first + cell.count; ++i) {
            const auto& q = res.grid[i];
            const WeightFunction w(q.kind, q.kappa);
            const auto sh = bound_shapes(q.pair, w);
            res.margin_H[i] = check_H_bound(q.pair, w, q.h(), cell.c.C1, cell.c.C2);
            res.margin_G[i] = check_G_bound(q.pair, w, q.g, cell.c.C34);
            const double sH = std::abs(q.h()) + cell.c.C1 * sh.X + cell.c.C2 * sh.W;
            const double sG = std::abs(q.g) + cell.c.C34 * sh.D;
            cell.min_margin_H = std::min(cell.min_margin_H, sH > 0.0 ? res.margin_H[i] / sH : 0.0);
            cell.min_margin_G = std::min(cell.min_margin_G, sG > 0.0 ? res.margin_G[i] / sG : 0.0);
        }
    }
    return res;
}

struct AppendixResult {
    std::size_t evaluations = 0, violations = 0;
    double min_upper_slack = HUGE_VAL, min_lower_slack = HUGE_VAL;  ///< relative to the round-off allowance scale
    std::string witness;
};

/// Criterion 5: lower <= lhs <= upper. Half the points are uniform on [0, max]^2, half log-uniform on
/// [1e-6, max]^2 so that small arguments are exercised too; kappa cycles through the list.
inline AppendixResult appendix_sweep(const PovznerParams& p, std::uint64_t seed) {
    AppendixResult r;
    Philox4x32 g(seed, stream_id(0x9013ull, 0));
    const double lo = std::log(1e-6), hi = std::log(p.appendix_max);
    for (int i = 0; i < p.appendix_points; ++i) {
        const double kappa = p.appendix_kappa[static_cast<std::size_t>(i) % p.appendix_kappa.size()];
        double x, y;
        if (i % 2 == 0) {
            x = p.appendix_max * g.uniform();
            y = p.appendix_max * g.uniform();
        } else {
            x = std::exp(lo + (hi - lo) * g.uniform());
            y = std::exp(lo + (hi - lo) * g.uniform());
        }
        for (auto kind : {WeightKind::psi1, WeightKind::psi2}) {
            const WeightFunction w(kind, kappa);
            const auto t = appendix_convexity_check(w, x, y);
            // lhs is a difference of terms of size psi(x + y)
            const double allowance = 8.0 * std::numeric_limits<double>::epsilon() * (w(x + y) + w(x) + w(y));
            const double su = t.upper - t.lhs, sl = t.lhs - t.lower;
            ++r.evaluations;
            r.min_upper_slack = std::min(r.min_upper_slack, su);
            r.min_lower_slack = std::min(r.min_lower_slack, sl);
            if (su < -allowance || sl < -allowance) {
                ++r.violations;
                if (r.witness.empty()) {
                    std::ostringstream os;
                    os << to_string(kind) << " kappa=" << kappa << " x=" << x << " y=" << y << " lower=" << t.lower
                       << " lhs=" << t.lhs << " upper=" << t.upper;
                    r.witness = os.str();
                }
            }
        }
    }
    return r;
}

inline json point_json(const PovznerPoint& q) {
    json j;
    j["weight"] = to_string(q.kind);
    j["e"] = q.e;
    j["kappa"] = q.kappa;
    j["n"] = q.n;
    j["pair"] = detail::pair_json(q.pair);
    j["k_direct"] = std::isnan(q.k_direct) ? json(nullptr) : json(q.k_direct);
    j["k_transformed"] = q.k_transformed;
    j["h"] = q.h();
    j["g"] = q.g;
    j["quad_error"] = q.quad_error;
    return j;
}

inline Check route_check(const std::vector<PovznerPoint>& pts, double tol) {
    double worst = 0.0;
    std::string where;
    for (const auto& q : pts) {
        const double d = std::abs(q.k_direct - q.k_transformed) / std::max(1.0, std::abs(q.k_direct));
        if (!(d <= worst)) {
            worst = d;
            where = detail::describe(q);
        }
    }
    return Check::make("k_direct vs k_transformed, worst relative difference over " + std::to_string(pts.size()) +
                           " tuples",
                       "1", worst, "<=", tol, where);
}

inline Check decomposition_check(const std::vector<PovznerPoint>& pts, double tol) {
    double worst = 0.0;
    std::string where;
    for (const auto& q : pts) {
        const double d = std::abs(q.h() + q.g - q.k_transformed) / std::max(1.0, std::abs(q.k_transformed));
        if (!(d <= worst)) {
            worst = d;
            where = detail::describe(q);
        }
    }
    return Check::make("h + g vs k_transformed, worst relative difference", "4", worst, "<=", tol, where);
}

inline std::vector<Check> feasibility_checks(const PovznerSweepResult& res) {
    std::size_t infeasible = 0;
    double worst_H = HUGE_VAL, worst_G = HUGE_VAL;
    std::string witness;
    for (const auto& c : res.cells) {
        if (!c.c.feasible) {
            ++infeasible;
            if (witness.empty())
                witness = to_string(c.kind) + " e=" + detail::fmt_g(c.e) + " kappa=" + detail::fmt_g(c.kappa) + ": " +
                          c.c.witness;
            continue;
        }
        worst_H = std::min(worst_H, c.min_margin_H);
        worst_G = std::min(worst_G, c.min_margin_G);
    }
    double neg_g = 0.0;
    for (const auto& q : res.grid) neg_g = std::max(neg_g, -(q.g + q.quad_error));
    return {Check::make("infeasible (weight, e, kappa) cells", "3", static_cast<double>(infeasible), "<=", 0.0, witness),
            Check::make("min normalized H margin over feasible cells", "3", worst_H, ">=", -1e-12),
            Check::make("min normalized G margin over feasible cells", "3", worst_G, ">=", -1e-12),
            Check::make("g below zero beyond its quadrature error", "", neg_g, "<=", 0.0)};
}

inline Check appendix_check(const AppendixResult& a) {
    return Check::make("appendix inequality violations over " + std::to_string(a.evaluations) + " evaluations", "5",
                       static_cast<double>(a.violations), "<=", 0.0, a.witness);
}

inline Outcome run_povzner_sweep(const PovznerParams& p, std::uint64_t seed, unsigned workers, const fs::path& dir) {
    Outcome out;
    const auto route = povzner_route_tuples(p, seed, workers);
    const auto res = povzner_grid(p, seed, workers);
    const auto app = appendix_sweep(p, seed);

    json report;
    json rj = json::array();
    for (const auto& q : route) rj.push_back(point_json(q));
    report["route_tuples"] = rj;
    json gj = json::array();
    for (std::size_t i = 0; i < res.grid.size(); ++i) {
        auto j = point_json(res.grid[i]);
        j["margins"] = {{"H", res.margin_H[i]}, {"G", res.margin_G[i]}};
        gj.push_back(j);
    }
    report["points"] = gj;
    json cj = json::array();
    for (const auto& c : res.cells) {
        json j{{"weight", to_string(c.kind)}, {"e", c.e},  {"kappa", c.kappa},
               {"points", c.count},           {"C1", c.c.C1}, {"C2", c.c.C2},
               {c.kappa < 2.0 ? "C3" : "C4", c.c.C34}, {"feasible", c.c.feasible}};
        if (!c.c.feasible) j["witness"] = c.c.witness;
        else j["min_normalized_margin"] = {{"H", c.min_margin_H}, {"G", c.min_margin_G}};
        cj.push_back(j);
    }
    report["cells"] = cj;
    report["appendix"] = {{"evaluations", app.evaluations},
                          {"violations", app.violations},
                          {"min_upper_slack", app.min_upper_slack},
                          {"min_lower_slack", app.min_lower_slack}};
    detail::save(dir, "povzner.json", report.dump(1) + "\n", out);

    detail::Csv csv({"weight", "e", "kappa", "n", "abs_v", "abs_v_star", "k_transformed", "h", "g", "margin_H", "margin_G"});
    for (std::size_t i = 0; i < res.grid.size(); ++i) {
        const auto& q = res.grid[i];
        csv.row_strings({to_string(q.kind), detail::fmt(q.e), detail::fmt(q.kappa), detail::fmt(q.n),
                         detail::fmt(norm(q.pair.v)), detail::fmt(norm(q.pair.v_star)), detail::fmt(q.k_transformed),
                         detail::fmt(q.h()), detail::fmt(q.g), detail::fmt(res.margin_H[i]), detail::fmt(res.margin_G[i])});
    }
    detail::save(dir, "povzner_points.csv", csv.str(), out);

    out.checks.push_back(route_check(route, p.route_tol));
    for (auto& c : feasibility_checks(res)) out.checks.push_back(c);
    out.checks.push_back(decomposition_check(res.grid, p.decomposition_tol));
    out.checks.push_back(appendix_check(app));
    return out;
}

// ---------------------------------------------------------------------------------------------
// simulate

inline std::string series_csv(const MomentSeries& s) {
    std::ostringstream os;
    write_series_csv(s, os);
    return os.str();
}

inline Outcome run_simulate(const SimulateParams& p, const fs::path& dir) {
    Outcome out;
    std::size_t snap = 0;
    const auto r = run(p.sim, [&](const ParticleEnsemble& ens) {
        std::ostringstream os;
        write_snapshot(ens, os);
        char name[32];
        std::snprintf(name, sizeof name, "snapshot_%03zu.ibnd", snap++);
        detail::save(dir, name, os.str(), out);
    });
    detail::save(dir, "series.csv", series_csv(r.series), out);
    const auto d = dissipation_check(r.series);
    out.summary["dt"] = r.dt;
    out.summary["steps"] = r.steps;
    out.summary["candidates"] = r.candidates;
    out.summary["accepted"] = r.accepted;
    out.summary["dissipation"] = {{"max_energy_increase", d.max_energy_increase},
                                  {"max_above_initial", d.max_above_initial},
                                  {"max_momentum_drift", d.max_momentum_drift},
                                  {"strictly_decreasing", d.strictly_decreasing}};
    if (p.sim.e < 1.0) {
        double m2_rise = 0.0;
        for (std::size_t k = 0; k < r.series.orders.size(); ++k)
            if (r.series.orders[k] == 2.0)
                for (std::size_t i = 1; i < r.series.size(); ++i)
                    m2_rise = std::max(m2_rise, r.series.M[k][i] - r.series.M[k][i - 1]);
        out.checks.push_back(Check::make("largest rise of M2 between outputs", "6", m2_rise, "<=", 0.0));
        out.checks.push_back(Check::make("largest rise of the energy between outputs (relative)", "6",
                                         d.max_energy_increase, "<=", 0.0));
    } else {
        double drift = 0.0;
        for (double E : r.series.energy) drift = std::max(drift, std::abs(E - r.series.energy.front()) / r.series.energy.front());
        out.checks.push_back(Check::make("energy drift (relative)", "6", drift, "<=", p.elastic_energy_tol));
    }
    out.checks.push_back(Check::make("momentum drift", "6", d.max_momentum_drift, "<=", p.momentum_tol));

    if (p.elastic_twin && p.sim.e < 1.0) {
        SimConfig twin = p.sim;
        twin.e = 1.0;
        twin.snapshot_times.clear();
        const auto rt = run(twin);
        detail::save(dir, "series_elastic.csv", series_csv(rt.series), out);
        double drift = 0.0, pdrift = 0.0;
        for (std::size_t i = 0; i < rt.series.size(); ++i) {
            drift = std::max(drift, std::abs(rt.series.energy[i] - rt.series.energy.front()) / rt.series.energy.front());
            pdrift = std::max(pdrift, norm(rt.series.momentum[i] - rt.series.momentum.front()));
        }
        out.summary["elastic_twin"] = {{"max_energy_drift", drift}, {"max_momentum_drift", pdrift}, {"accepted", rt.accepted}};
        out.checks.push_back(Check::make("elastic twin energy drift (relative)", "6", drift, "<=", p.elastic_energy_tol));
        out.checks.push_back(Check::make("elastic twin momentum drift", "6", pdrift, "<=", p.momentum_tol));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// moment_creation

struct LadderEntry {
    std::size_t N = 0;
    double M4_initial = 0.0;
    double M4_max = 0.0, M6_max = 0.0;  ///< of the replicate-mean series over records with t in [t0, T]
    double M4_max_se = 0.0, M6_max_se = 0.0;  ///< replicate standard error at the time of each maximum
    double t_M4_max = 0.0, t_M6_max = 0.0;
    MomentSeries mean;  ///< replicate mean; collisions are summed
    std::vector<RunResult> runs;
};

inline SimConfig ladder_config(const MomentCreationParams& p, std::size_t N, std::uint64_t seed, unsigned workers) {
    SimConfig c;
    c.e = p.e;
    c.gamma = p.gamma;
    c.s = p.s;
    c.K = p.K;
    c.n = p.n;
    c.N = N;
    c.t_final = p.T;
    c.seed = seed;
    c.init.kind = InitialKind::power_tail;
    c.init.q = p.q;
    c.init.loading = p.loading == "stratified" ? RadialLoading::stratified : RadialLoading::iid;
    c.moment_orders = {2.0, 4.0, 6.0};
    c.output_dt = p.output_dt;
    c.dt_factor = p.dt_factor;
    c.workers = workers;
    return c;
}

inline MomentSeries mean_series(const std::vector<RunResult>& runs) {
    MomentSeries m = runs.front().series;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        const auto& s = runs[r].series;
        if (s.size() != m.size()) throw InvariantError("replicate series", "record counts differ");
        for (std::size_t i = 0; i < m.size(); ++i) {
            for (std::size_t k = 0; k < m.orders.size(); ++k) m.M[k][i] += s.M[k][i];
            m.energy[i] += s.energy[i];
            m.momentum[i] += s.momentum[i];
            m.collisions[i] += s.collisions[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(runs.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (auto& col : m.M) col[i] *= inv;
        m.energy[i] *= inv;
        m.momentum[i] = inv * m.momentum[i];
    }
    return m;
}

/// Replicate r runs with stream_id(seed, r) at every N, so the rungs share one seed family.
inline LadderEntry ladder_rung(const MomentCreationParams& p, std::size_t N, std::uint64_t seed, unsigned workers) {
    LadderEntry e;
    e.N = N;
    for (int r = 0; r < p.replicates; ++r)
        e.runs.push_back(run(ladder_config(p, N, stream_id(seed, static_cast<std::uint64_t>(r)), workers)));
    e.mean = mean_series(e.runs);
    const double dt = e.runs.front().dt;
    const auto& s = e.mean;
    e.M4_initial = s.order(4.0).front();

    auto maximum = [&](double l, double& value, double& t, double& se) {
        const auto& m = s.order(l);
        std::size_t at = s.size();
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.times[i] < p.t0 - 0.5 * dt) continue;  // records sit on the step grid
            if (at == s.size() || m[i] > m[at]) at = i;
        }
        value = m[at];
        t = s.times[at];
        se = 0.0;
        if (e.runs.size() > 1) {
            double ss = 0.0;
            for (const auto& run : e.runs) ss += std::pow(run.series.order(l)[at] - value, 2);
            const double R = static_cast<double>(e.runs.size());
            se = std::sqrt(ss / (R - 1.0) / R);
        }
    };
    maximum(4.0, e.M4_max, e.t_M4_max, e.M4_max_se);
    maximum(6.0, e.M6_max, e.t_M6_max, e.M6_max_se);
    return e;
}

inline std::vector<Check> ladder_checks(const MomentCreationParams& p, const std::vector<LadderEntry>& L) {
    double min_growth = HUGE_VAL;
    std::string where;
    for (std::size_t i = 1; i < L.size(); ++i) {
        // growth per doubling, for ladders that are not exact doublings
        const double g = std::pow(L[i].M4_initial / L[i - 1].M4_initial,
                                  1.0 / std::log2(static_cast<double>(L[i].N) / static_cast<double>(L[i - 1].N))) - 1.0;
        if (g < min_growth) {
            min_growth = g;
            where = "N " + std::to_string(L[i - 1].N) + " -> " + std::to_string(L[i].N);
        }
    }
    const auto& a = L[L.size() - 2];
    const auto& b = L.back();
    auto spread = [](double x, double y) { return std::abs(x - y) / std::min(x, y); };
    // first-order standard error of the spread from the replicate errors of both maxima
    auto spread_se = [](double x, double sx, double y, double sy) {
        return std::max(x, y) / std::min(x, y) * std::hypot(sx / x, sy / y);
    };
    const std::string pair = "N " + std::to_string(a.N) + " vs " + std::to_string(b.N) + ", " +
                             std::to_string(b.runs.size()) + " replicates";
    auto pair_se = [&](double se) { return pair + ", standard error " + detail::fmt_g(se); };
    return {Check::make("(a) smallest rise of M4(0) per doubling of N", "7", min_growth, ">=", p.growth_threshold, where),
            Check::make("(b) spread of max M4 over [t0, T] between the two largest N", "7", spread(a.M4_max, b.M4_max), "<",
                        p.stability_threshold, pair_se(spread_se(a.M4_max, a.M4_max_se, b.M4_max, b.M4_max_se))),
            Check::make("(c) spread of max M6 over [t0, T] between the two largest N", "7", spread(a.M6_max, b.M6_max), "<",
                        p.stability_threshold, pair_se(spread_se(a.M6_max, a.M6_max_se, b.M6_max, b.M6_max_se)))};
}

inline Outcome run_moment_creation(const MomentCreationParams& p, std::uint64_t seed, unsigned workers,
                                   const fs::path& dir) {
    Outcome out;
    std::vector<LadderEntry> ladder;
    json rungs = json::array();
    for (std::size_t N : p.N) {
        ladder.push_back(ladder_rung(p, N, seed, workers));
        const auto& e = ladder.back();
        detail::save(dir, "series_N" + std::to_string(N) + ".csv", series_csv(e.mean), out);
        std::uint64_t accepted = 0;
        for (std::size_t r = 0; r < e.runs.size(); ++r) {
            detail::save(dir, "series_N" + std::to_string(N) + "_r" + std::to_string(r) + ".csv",
                         series_csv(e.runs[r].series), out);
            accepted += e.runs[r].accepted;
        }
        rungs.push_back({{"N", N},
                         {"replicates", e.runs.size()},
                         {"M4_initial", e.M4_initial},
                         {"M4_max", e.M4_max},
                         {"M4_max_stderr", e.M4_max_se},
                         {"t_M4_max", e.t_M4_max},
                         {"M6_max", e.M6_max},
                         {"M6_max_stderr", e.M6_max_se},
                         {"t_M6_max", e.t_M6_max},
                         {"dt", e.runs.front().dt},
                         {"steps", e.runs.front().steps},
                         {"accepted", accepted}});
    }
    out.checks = ladder_checks(p, ladder);
    out.summary["ladder"] = rungs;
    out.summary["N_stable"] = out.checks[1].pass && out.checks[2].pass;
    return out;
}

// ---------------------------------------------------------------------------------------------
// fourier_residual

inline ResidualOptions residual_options(const FourierParams& p, std::uint64_t seed, unsigned workers) {
    ResidualOptions o;
    o.e = p.e;
    o.gamma = p.gamma;
    o.s = p.s;
    o.K = p.K;
    o.n = p.n;
    o.T = p.T;
    o.N = p.N;
    o.replicates = static_cast<unsigned>(p.replicates);
    o.delta = p.delta;
    o.seed = seed;
    o.workers = workers;
    o.probes.clear();
    for (const auto& x : p.probes) o.probes.push_back(Vec3{x[0], x[1], x[2]});
    o.bobylev.seed = stream_id(seed, 0xB0Bull);
    o.bobylev.batches = static_cast<unsigned>(p.batches);
    o.bobylev.samples_per_batch = static_cast<unsigned>(p.samples_per_batch);
    o.bobylev.radii = static_cast<unsigned>(p.radii);
    o.bobylev.max_stderr = p.max_stderr;
    return o;
}

inline std::string lemma_file(double gamma, double n) {
    return "lemma25_gamma" + detail::fmt_g(gamma) + "_n" + detail::fmt_g(n) + ".csv";
}

inline std::vector<DecayReport> lemma25_reports(const FourierParams& p) {
    std::vector<DecayReport> reps;
    for (double g : p.lemma_gamma)
        for (double n : p.lemma_n)
            reps.push_back(lemma25_decay(MollifiedKineticKernel(g, n), p.lemma_zmin, p.lemma_zmax, p.lemma_points));
    return reps;
}

inline Check lemma25_check(const std::vector<DecayReport>& reps) {
    std::size_t unbounded = 0;
    std::string where;
    for (const auto& r : reps)
        if (!r.bounded()) {
            ++unbounded;
            if (where.empty()) where = "gamma=" + detail::fmt_g(r.gamma) + " n=" + detail::fmt_g(r.n);
        }
    return Check::make("(gamma, n) cases whose ratio grows in the last decade or is not finite", "8",
                       static_cast<double>(unbounded), "<=", 0.0, where);
}

inline std::vector<Check> residual_checks(const ResidualReport& rep, double z_threshold) {
    double zmax = 0.0;
    std::size_t flagged = 0;
    std::string where;
    for (const auto& pr : rep.probes) {
        const double z = std::max(std::abs(pr.z_re), std::abs(pr.z_im));
        if (!(z <= zmax)) {
            zmax = z;
            std::ostringstream os;
            os << "xi=(" << pr.xi.x << "," << pr.xi.y << "," << pr.xi.z << ")";
            where = os.str();
        }
        if (pr.flagged) ++flagged;
    }
    return {Check::make("max |z| of d phi/dt (DSMC) minus the Bobylev right side, " + std::to_string(rep.probes.size()) +
                            " probes",
                        "9", zmax, "<=", z_threshold, where),
            Check::make("Bobylev estimates over the standard-error limit", "9", static_cast<double>(flagged), "<=", 0.0)};
}

inline Outcome run_fourier_residual(const FourierParams& p, std::uint64_t seed, unsigned workers, const fs::path& dir) {
    Outcome out;
    const auto reps = lemma25_reports(p);
    json lemma = json::array();
    for (const auto& r : reps) {
        detail::Csv csv({"zeta", "phi_hat", "ratio", "d1_ratio"});
        for (std::size_t i = 0; i < r.zeta.size(); ++i) csv.row({r.zeta[i], r.phi_hat[i], r.ratio[i], r.d1_ratio[i]});
        detail::save(dir, lemma_file(r.gamma, r.n), csv.str(), out);
        lemma.push_back({{"gamma", r.gamma},
                         {"n", r.n},
                         {"fitted_constant", r.fitted_constant},
                         {"d1_constant", r.d1_constant},
                         {"head_max", r.head_max},
                         {"tail_max", r.tail_max},
                         {"asymptotic_constant", r.asymptotic_constant},
                         {"bounded", r.bounded()}});
    }

    const auto rep = bobylev_residual(residual_options(p, seed, workers));
    json probes = json::array();
    for (const auto& pr : rep.probes)
        probes.push_back({{"xi", detail::vec_json(pr.xi)},
                          {"rhs_estimate", {pr.rhs.real(), pr.rhs.imag()}},
                          {"stderr", {pr.rhs_se_re, pr.rhs_se_im}},
                          {"fd_derivative", {pr.fd.real(), pr.fd.imag()}},
                          {"fd_stderr", {pr.fd_se_re, pr.fd_se_im}},
                          {"z_score", {pr.z_re, pr.z_im}},
                          {"flagged", pr.flagged}});
    json report;
    report["delta"] = rep.delta_actual;
    report["probes"] = probes;
    report["lemma25"] = lemma;
    detail::save(dir, "fourier.json", report.dump(1) + "\n", out);

    out.checks.push_back(lemma25_check(reps));
    for (auto& c : residual_checks(rep, p.z_threshold)) out.checks.push_back(c);
    return out;
}

// ---------------------------------------------------------------------------------------------
// orchestration

/// Data artifacts a complete run of `spec` writes, besides summary.json.
inline std::vector<std::string> expected_files(const ExperimentSpec& spec) {
    switch (spec.kind) {
        case ExperimentKind::kernel_report: return {"kernels_bn.csv", "kernels_phin.csv"};
        case ExperimentKind::povzner_sweep: return {"povzner.json", "povzner_points.csv"};
        case ExperimentKind::simulate: {
            std::vector<std::string> f;
            for (std::size_t i = 0; i < spec.simulate.sim.snapshot_times.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "snapshot_%03zu.ibnd", i);
                f.push_back(name);
            }
            f.push_back("series.csv");
            if (spec.simulate.elastic_twin && spec.simulate.sim.e < 1.0) f.push_back("series_elastic.csv");
            return f;
        }
        case ExperimentKind::moment_creation: {
            std::vector<std::string> f;
            for (std::size_t N : spec.moments.N) {
                f.push_back("series_N" + std::to_string(N) + ".csv");
                for (int r = 0; r < spec.moments.replicates; ++r)
                    f.push_back("series_N" + std::to_string(N) + "_r" + std::to_string(r) + ".csv");
            }
            return f;
        }
        case ExperimentKind::fourier_residual: {
            std::vector<std::string> f;
            for (double g : spec.fourier.lemma_gamma)
                for (double n : spec.fourier.lemma_n) f.push_back(lemma_file(g, n));
            f.push_back("fourier.json");
            return f;
        }
    }
    return {};
}

inline Outcome dispatch(const ExperimentSpec& spec, const fs::path& dir) {
    switch (spec.kind) {
        case ExperimentKind::kernel_report: return run_kernel_report(spec.kernels, dir);
        case ExperimentKind::povzner_sweep: return run_povzner_sweep(spec.povzner, spec.seed, spec.workers, dir);
        case ExperimentKind::simulate: return run_simulate(spec.simulate, dir);
        case ExperimentKind::moment_creation: return run_moment_creation(spec.moments, spec.seed, spec.workers, dir);
        case ExperimentKind::fourier_residual: return run_fourier_residual(spec.fourier, spec.seed, spec.workers, dir);
    }
    throw DomainError("unknown experiment kind");
}

/// A fresh directory under `root` named <kind>-<UTC time>-<config hash prefix>.
inline fs::path make_run_dir(const fs::path& root, const ExperimentSpec& spec) {
    const std::string base = to_string(spec.kind) + "-" + utc_timestamp(std::chrono::system_clock::now(), true) + "-" +
                             config_hash(spec).substr(0, 8);
    fs::create_directories(root);
    fs::path dir = root / base;
    for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
    fs::create_directory(dir);
    return dir;
}

struct RunStatus {
    int exit_code = 0;  ///< 0 success, 2 failed check or invariant
    fs::path dir;
    Outcome outcome;
    std::string error;
};

/// Runs `spec` into `dir` (created if needed): manifest first with status "running", then the
/// data artifacts and summary.json, then the completed manifest with every file's SHA-256.
inline RunStatus run_experiment(const ExperimentSpec& spec, const fs::path& dir) {
    RunStatus st;
    st.dir = dir;
    fs::create_directories(dir);
    RunManifest m;
    m.config = spec.materialized();
    m.config_hash = config_hash(spec);
    m.seed = spec.seed;
    m.workers = spec.workers;
    m.kind = to_string(spec.kind);
    const auto t0 = std::chrono::system_clock::now();
    m.start_time = utc_timestamp(t0);
    for (const auto& f : expected_files(spec)) m.files.push_back({f, "", 0});
    m.files.push_back({"summary.json", "", 0});
    write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");

    try {
        st.outcome = dispatch(spec, dir);
        json summary;
        summary["kind"] = m.kind;
        summary["config_hash"] = m.config_hash;
        json checks = json::array();
        for (const auto& c : st.outcome.checks) checks.push_back(c.to_json());
        summary["checks"] = checks;
        summary["results"] = st.outcome.summary;
        summary["passed"] = st.outcome.passed();
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        st.outcome.files.push_back("summary.json");
        m.status = "complete";
        st.exit_code = st.outcome.passed() ? 0 : 2;
        if (!st.outcome.passed())
            for (const auto& c : st.outcome.checks)
                if (!c.pass) {
                    st.error = "check failed: " + c.name;
                    break;
                }
    } catch (const ConfigError&) {
        throw;
    } catch (const InvariantError& e) {
        m.status = "failed";
        m.error = e.what();
        st.error = std::string("invariant violated: ") + e.what();
        st.exit_code = 2;
    } catch (const std::exception& e) {
        // numerical failures (quadrature, domain) are not usage errors
        m.status = "failed";
        m.error = e.what();
        st.error = e.what();
        st.exit_code = 2;
    }
    const auto t1 = std::chrono::system_clock::now();
    m.end_time = utc_timestamp(t1);
    m.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    m.files.clear();
    for (const auto& f : st.outcome.files) m.files.push_back({f, sha256_file(dir / f), fs::file_size(dir / f)});
    write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");
    return st;
}

}  // namespace kinetics::harness
