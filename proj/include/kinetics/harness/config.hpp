#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinetics/dsmc.hpp"
#include "kinetics/errors.hpp"
#include "kinetics/vec3.hpp"
#include "kinetics/weights.hpp"

namespace kinetics::harness {

using json = nlohmann::ordered_json;

enum class ExperimentKind { povzner_sweep, simulate, moment_creation, fourier_residual, kernel_report };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::povzner_sweep: return "povzner_sweep";
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::moment_creation: return "moment_creation";
        case ExperimentKind::fourier_residual: return "fourier_residual";
        case ExperimentKind::kernel_report: return "kernel_report";
    }
    return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::povzner_sweep, ExperimentKind::simulate, ExperimentKind::moment_creation,
                   ExperimentKind::fourier_residual, ExperimentKind::kernel_report})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

struct KernelReportParams {
    double s = 0.25, K = 1.0, gamma = 1.0;
    std::vector<double> n{4.0, 8.0, 16.0};
    std::vector<double> alpha0{1.0, 2.0};
    int theta_points = 200;
    int r_points = 200;

    template <class V>
    void visit(V& v) {
        v("s", s);
        v("K", K);
        v("gamma", gamma);
        v("n", n);
        v("alpha0", alpha0);
        v("theta_points", theta_points);
        v("r_points", r_points);
    }
    void validate() const;
};

struct PovznerParams {
    double s = 0.25, K = 1.0;
    std::vector<double> n{4.0, 16.0};
    std::vector<double> e{0.3, 0.5, 0.8, 1.0};
    std::vector<double> kappa{0.5, 1.0, 3.0};
    std::vector<std::string> weights{"psi1", "psi2"};
    std::vector<double> magnitudes{0.1, 1.0, 10.0, 100.0};
    int directions = 24;        ///< random direction pairs per (|v|, |v*|) magnitude pair
    int route_tuples = 200;     ///< random tuples for the two-route comparison
    int appendix_points = 10000;
    std::vector<double> appendix_kappa{0.5, 1.0, 2.0, 4.0};
    double appendix_max = 1000.0;
    double route_tol = 1e-6;
    double decomposition_tol = 1e-6;

    template <class V>
    void visit(V& v) {
        v("s", s);
        v("K", K);
        v("n", n);
        v("e", e);
        v("kappa", kappa);
        v("weights", weights);
        v("magnitudes", magnitudes);
        v("directions", directions);
        v("route_tuples", route_tuples);
        v("appendix_points", appendix_points);
        v("appendix_kappa", appendix_kappa);
        v("appendix_max", appendix_max);
        v("route_tol", route_tol);
        v("decomposition_tol", decomposition_tol);
    }
    void validate() const;
};

struct SimulateParams {
    SimConfig sim;
    std::string init_kind = "maxwellian";
    std::string loading = "iid";
    bool elastic_twin = true;  ///< also run e = 1 from the same initial data
    double momentum_tol = 1e-10;
    double elastic_energy_tol = 1e-10;

    template <class V>
    void visit(V& v) {
        v.required("e", sim.e);
        v.required("gamma", sim.gamma);
        v.required("N", sim.N);
        v.required("t_final", sim.t_final);
        v("s", sim.s);
        v("K", sim.K);
        v("n", sim.n);
        v("output_dt", sim.output_dt);
        v("dt_factor", sim.dt_factor);
        v("moment_orders", sim.moment_orders);
        v("snapshot_times", sim.snapshot_times);
        v("init", init_kind);
        v("T", sim.init.T);
        v("q", sim.init.q);
        v("T1", sim.init.T1);
        v("T2", sim.init.T2);
        v("fraction", sim.init.fraction);
        v("loading", loading);
        v("elastic_twin", elastic_twin);
        v("momentum_tol", momentum_tol);
        v("elastic_energy_tol", elastic_energy_tol);
    }
    void validate();
};

struct MomentCreationParams {
    double e = 0.5, gamma = 1.0, s = 0.25, K = 1.0, n = 128.0;
    double q = 6.0;
    std::string loading = "stratified";
    std::vector<std::size_t> N{25000, 50000, 100000, 200000};
    double t0 = 0.1, T = 2.0;
    double output_dt = 0.05;
    double dt_factor = 0.1;
    int replicates = 4;  ///< seed family per N: replicate r uses stream_id(seed, r) at every N
    double growth_threshold = 0.25;     ///< minimum relative rise of M4(0) per doubling of N
    double stability_threshold = 0.10;  ///< maximum relative spread of max M4, M6 between the two largest N

    template <class V>
    void visit(V& v) {
        v("e", e);
        v("gamma", gamma);
        v("s", s);
        v("K", K);
        v("n", n);
        v("q", q);
        v("loading", loading);
        v("N", N);
        v("t0", t0);
        v("T", T);
        v("output_dt", output_dt);
        v("dt_factor", dt_factor);
        v("replicates", replicates);
        v("growth_threshold", growth_threshold);
        v("stability_threshold", stability_threshold);
    }
    void validate() const;
};

struct FourierParams {
    double e = 0.8, gamma = 1.0, s = 0.25, K = 1.0, n = 8.0;
    double T = 1.0;
    std::size_t N = 62500;
    int replicates = 32;
    double delta = 0.01;
    std::vector<std::vector<double>> probes{{0.5, 0, 0}, {0, 0.6, 0.8}, {0.9, 0.9, 0.6}, {1.2, -0.9, 1.0}, {0, -2.0, 0}};
    int batches = 64;
    int samples_per_batch = 2000;
    int radii = 16;
    double max_stderr = 0.05;
    double z_threshold = 3.0;
    std::vector<double> lemma_gamma{0.5, 1.0, 2.0};
    std::vector<double> lemma_n{4.0, 16.0};
    double lemma_zmin = 0.1, lemma_zmax = 1000.0;
    int lemma_points = 200;

    template <class V>
    void visit(V& v) {
        v("e", e);
        v("gamma", gamma);
        v("s", s);
        v("K", K);
        v("n", n);
        v("T", T);
        v("N", N);
        v("replicates", replicates);
        v("delta", delta);
        v("probes", probes);
        v("batches", batches);
        v("samples_per_batch", samples_per_batch);
        v("radii", radii);
        v("max_stderr", max_stderr);
        v("z_threshold", z_threshold);
        v("lemma_gamma", lemma_gamma);
        v("lemma_n", lemma_n);
        v("lemma_zmin", lemma_zmin);
        v("lemma_zmax", lemma_zmax);
        v("lemma_points", lemma_points);
    }
    void validate() const;
};

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::simulate;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    KernelReportParams kernels;
    PovznerParams povzner;
    SimulateParams simulate;
    MomentCreationParams moments;
    FourierParams fourier;

    /// The config with every default filled in; hashing this identifies the run.
    json materialized() const;
};

namespace detail {

template <class T>
T convert(const json& j, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw ConfigError("'" + path + "' must be a boolean");
        return j.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw ConfigError("'" + path + "' must be a string");
        return j.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
        if (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned())
            throw ConfigError("'" + path + "' must be nonnegative");
        return j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw ConfigError("'" + path + "' must be a number");
        return j.get<T>();
    } else {
        if (!j.is_array()) throw ConfigError("'" + path + "' must be an array");
        T out;
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(convert<typename T::value_type>(j[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }
}

/// Pulls known keys out of a params object and rejects anything left over.
class Reader {
  public:
    Reader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError("'" + prefix_ + "' must be an object");
    }

    template <class T>
    void operator()(const char* key, T& dst) {
        seen_.insert(key);
        if (obj_.contains(key)) dst = convert<T>(obj_.at(key), prefix_ + "." + key);
    }

    template <class T>
    void required(const char* key, T& dst) {
        if (!obj_.contains(key)) throw ConfigError("missing required key '" + prefix_ + "." + key + "'");
        (*this)(key, dst);
    }

    void finish() const {
        for (const auto& [k, _] : obj_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key '" + prefix_ + "." + k + "'");
    }

  private:
    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

class Writer {
  public:
    template <class T>
    void operator()(const char* key, const T& v) {
        out[key] = v;
    }
    template <class T>
    void required(const char* key, const T& v) {
        out[key] = v;
    }
    json out = json::object();
};

template <class P>
json write_params(const P& p) {
    Writer w;
    const_cast<P&>(p).visit(w);  // visit only reads through a Writer
    return w.out;
}

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

inline void require_positive_list(const std::vector<double>& v, const std::string& name) {
    require(!v.empty(), name + " must be a nonempty list");
    for (double x : v) require(x > 0.0, name + " entries must be positive");
}

}  // namespace detail

inline void KernelReportParams::validate() const {
    using detail::require;
    require(s > 0.0 && s < 1.0, "s must lie in (0, 1): angular singularity order");
    require(K > 0.0, "K must be positive");
    require(gamma > 0.0 && gamma <= 2.0, "gamma must lie in (0, 2]: hard-potential range");
    detail::require_positive_list(n, "n");
    detail::require_positive_list(alpha0, "alpha0");
    for (double a : alpha0) require(a > 2.0 * s, "alpha0 entries must exceed 2s for the weighted angular integral to converge");
    require(theta_points >= 2 && r_points >= 2, "theta_points and r_points must be at least 2");
}

inline void PovznerParams::validate() const {
    using detail::require;
    require(s > 0.0 && s < 1.0, "s must lie in (0, 1): angular singularity order");
    require(K > 0.0, "K must be positive");
    detail::require_positive_list(n, "n");
    require(!e.empty(), "e must be a nonempty list");
    for (double x : e) require(x > 0.0 && x <= 1.0, "e must lie in (0, 1]: restitution coefficient range");
    detail::require_positive_list(kappa, "kappa");
    require(!weights.empty(), "weights must be a nonempty list");
    for (const auto& w : weights) {
        const auto k = weight_kind_from_string(w);
        require(k == WeightKind::psi1 || k == WeightKind::psi2, "weights entries must be psi1 or psi2");
    }
    detail::require_positive_list(magnitudes, "magnitudes");
    require(directions >= 1, "directions must be at least 1");
    require(route_tuples >= 0 && appendix_points >= 0, "route_tuples and appendix_points must be nonnegative");
    detail::require_positive_list(appendix_kappa, "appendix_kappa");
    require(appendix_max > 0.0, "appendix_max must be positive");
    require(route_tol > 0.0 && decomposition_tol > 0.0, "tolerances must be positive");
}

inline void SimulateParams::validate() {
    using detail::require;
    if (init_kind == "maxwellian") sim.init.kind = InitialKind::maxwellian;
    else if (init_kind == "power_tail") sim.init.kind = InitialKind::power_tail;
    else if (init_kind == "bi_maxwellian") sim.init.kind = InitialKind::bi_maxwellian;
    else throw ConfigError("init must be maxwellian, power_tail or bi_maxwellian");
    if (loading == "iid") sim.init.loading = RadialLoading::iid;
    else if (loading == "stratified") sim.init.loading = RadialLoading::stratified;
    else throw ConfigError("loading must be iid or stratified");
    sim.validate();
    require(momentum_tol > 0.0 && elastic_energy_tol > 0.0, "tolerances must be positive");
}

inline void MomentCreationParams::validate() const {
    using detail::require;
    require(e > 0.0 && e <= 1.0, "e must lie in (0, 1]: restitution coefficient range");
    require(gamma > 0.0 && gamma <= 2.0, "gamma must lie in (0, 2]: hard-potential range");
    require(s > 0.0 && s < 1.0, "s must lie in (0, 1): angular singularity order");
    require(K > 0.0 && n > 0.0, "K and n must be positive");
    require(q > 5.0, "power_tail needs q > 5: finite energy of the initial law");
    require(loading == "iid" || loading == "stratified", "loading must be iid or stratified");
    require(N.size() >= 2, "N needs at least two ensemble sizes");
    for (std::size_t i = 0; i < N.size(); ++i) {
        require(N[i] >= 2, "N entries must be at least 2");
        if (i > 0) require(N[i] > N[i - 1], "N must increase");
    }
    require(t0 >= 0.0 && T > t0, "need 0 <= t0 < T");
    require(output_dt > 0.0, "output_dt must be positive");
    require(dt_factor > 0.0 && dt_factor <= 0.1, "dt_factor must lie in (0, 0.1]");
    require(replicates >= 1, "replicates must be at least 1");
    require(growth_threshold >= 0.0 && stability_threshold > 0.0, "thresholds must be nonnegative");
}

inline void FourierParams::validate() const {
    using detail::require;
    require(e > 0.0 && e <= 1.0, "e must lie in (0, 1]: restitution coefficient range");
    require(gamma > 0.0 && gamma <= 2.0, "gamma must lie in (0, 2]: hard-potential range");
    require(s > 0.0 && s < 1.0, "s must lie in (0, 1): angular singularity order");
    require(K > 0.0 && n > 0.0 && T > 0.0, "K, n and T must be positive");
    require(N >= 2 && replicates >= 2, "N and replicates must be at least 2");
    require(delta > 0.0, "delta must be positive");
    require(!probes.empty(), "probes must be a nonempty list");
    for (const auto& p : probes) require(p.size() == 3, "each probe must have three components");
    require(batches >= 2 && samples_per_batch >= 1 && radii >= 1, "need batches >= 2, samples_per_batch >= 1, radii >= 1");
    require(max_stderr > 0.0 && z_threshold > 0.0, "max_stderr and z_threshold must be positive");
    require(!lemma_gamma.empty(), "lemma_gamma must be a nonempty list");
    for (double g : lemma_gamma) require(g > 0.0 && g <= 2.0, "lemma_gamma must lie in (0, 2]: hard-potential range");
    detail::require_positive_list(lemma_n, "lemma_n");
    require(lemma_zmin > 0.0 && lemma_zmax > lemma_zmin && lemma_points >= 2, "bad lemma grid");
}

inline json ExperimentSpec::materialized() const {
    json j;
    j["kind"] = to_string(kind);
    j["seed"] = seed;
    j["workers"] = workers;
    switch (kind) {
        case ExperimentKind::kernel_report: j["params"] = detail::write_params(kernels); break;
        case ExperimentKind::povzner_sweep: j["params"] = detail::write_params(povzner); break;
        case ExperimentKind::simulate: j["params"] = detail::write_params(simulate); break;
        case ExperimentKind::moment_creation: j["params"] = detail::write_params(moments); break;
        case ExperimentKind::fourier_residual: j["params"] = detail::write_params(fourier); break;
    }
    return j;
}

/// Builds a validated spec from a parsed config tree.
inline ExperimentSpec parse_config_json(const json& root) {
    if (!root.is_object()) throw ConfigError("config root must be an object");
    for (const auto& [k, _] : root.items())
        if (k != "kind" && k != "seed" && k != "workers" && k != "params") throw ConfigError("unknown key '" + k + "'");
    if (!root.contains("kind")) throw ConfigError("missing required key 'kind'");
    ExperimentSpec spec;
    spec.kind = experiment_kind_from_string(detail::convert<std::string>(root.at("kind"), "kind"));
    if (root.contains("seed")) spec.seed = detail::convert<std::uint64_t>(root.at("seed"), "seed");
    if (root.contains("workers")) spec.workers = detail::convert<unsigned>(root.at("workers"), "workers");
    if (spec.workers == 0) throw ConfigError("workers must be at least 1");
    const json params = root.contains("params") ? root.at("params") : json::object();
    detail::Reader r(params, "params");
    switch (spec.kind) {
        case ExperimentKind::kernel_report:
            spec.kernels.visit(r);
            r.finish();
            spec.kernels.validate();
            break;
        case ExperimentKind::povzner_sweep:
            spec.povzner.visit(r);
            r.finish();
            spec.povzner.validate();
            break;
        case ExperimentKind::simulate:
            spec.simulate.visit(r);
            r.finish();
            spec.simulate.sim.seed = spec.seed;
            spec.simulate.sim.workers = spec.workers;
            spec.simulate.validate();
            break;
        case ExperimentKind::moment_creation:
            spec.moments.visit(r);
            r.finish();
            spec.moments.validate();
            break;
        case ExperimentKind::fourier_residual:
            spec.fourier.visit(r);
            r.finish();
            spec.fourier.validate();
            break;
    }
    return spec;
}

inline ExperimentSpec parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config_json(root);
}

inline ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

/// Applies --seed / --workers overrides and revalidates.
inline void apply_overrides(ExperimentSpec& spec, std::optional<std::uint64_t> seed, std::optional<unsigned> workers) {
    if (seed) spec.seed = *seed;
    if (workers) {
        if (*workers == 0) throw ConfigError("workers must be at least 1");
        spec.workers = *workers;
    }
    spec.simulate.sim.seed = spec.seed;
    spec.simulate.sim.workers = spec.workers;
}

}  // namespace kinetics::harness
