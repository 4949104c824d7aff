// kinetics: command-line entry point for every experiment.
//
//   kinetics <subcommand> [--config file] [--seed u64] [--out dir] [--workers k]
//   kinetics report <run dir>
//
// Exit status: 0 success, 1 usage or configuration error, 2 failed check or invariant.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "kinetics/harness/config.hpp"
#include "kinetics/harness/experiments.hpp"
#include "kinetics/harness/report.hpp"

namespace h = kinetics::harness;

namespace {

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out = "runs";
};

int run_kind(h::ExperimentKind kind, const RunArgs& a) {
    h::ExperimentSpec spec;
    if (a.config.empty()) {
        h::json root{{"kind", h::to_string(kind)}};
        spec = h::parse_config_json(root);
    } else {
        spec = h::parse_config(a.config);
        if (spec.kind != kind)
            throw kinetics::ConfigError("config kind '" + h::to_string(spec.kind) + "' does not match the subcommand");
    }
    h::apply_overrides(spec, a.seed, a.workers);
    const auto dir = h::make_run_dir(a.out, spec);
    std::cout << "writing " << dir.string() << std::endl;
    const auto st = h::run_experiment(spec, dir);
    for (const auto& c : st.outcome.checks)
        std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << c.measured << " " << c.relation << " "
                  << c.threshold << "\n";
    if (st.exit_code != 0) std::cerr << "kinetics: " << st.error << "\n";
    return st.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inelastic Boltzmann verification harness"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(h::tool_version));

    RunArgs args;
    struct Sub {
        const char* name;
        h::ExperimentKind kind;
        const char* help;
    };
    const Sub subs[] = {
        {"kernels", h::ExperimentKind::kernel_report, "tabulate b, b_n and Phi_n"},
        {"povzner", h::ExperimentKind::povzner_sweep, "two-route Povzner sweep, fitted constants, appendix lemma"},
        {"simulate", h::ExperimentKind::simulate, "DSMC run with moment series and snapshots"},
        {"moment-creation", h::ExperimentKind::moment_creation, "power-tail ladder over N"},
        {"fourier", h::ExperimentKind::fourier_residual, "decay of Phi_n^ and the Bobylev residual"},
    };
    std::vector<std::pair<CLI::App*, h::ExperimentKind>> runners;
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", args.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
        sc->add_option("--seed", args.seed, "override the config seed");
        sc->add_option("--out", args.out, "directory that receives the timestamped run directory")->capture_default_str();
        sc->add_option("--workers", args.workers, "worker threads (recorded in the manifest)")->check(CLI::PositiveNumber);
        runners.emplace_back(sc, s.kind);
    }
    std::string report_dir;
    auto* rep = app.add_subcommand("report", "summarize a run directory and write plot data");
    rep->add_option("dir", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (rep->parsed()) return h::report(report_dir, std::cout).exit_code;
        for (const auto& [sc, kind] : runners)
            if (sc->parsed()) return run_kind(kind, args);
    } catch (const kinetics::ConfigError& e) {
        std::cerr << "kinetics: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "kinetics: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
