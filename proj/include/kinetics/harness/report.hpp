#pragma once

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kinetics/harness/experiments.hpp"
#include "kinetics/harness/manifest.hpp"

namespace kinetics::harness {

/// Whitespace-separated copy of a CSV for gnuplot, header turned into a comment line.
inline std::string csv_to_plot_data(const std::string& csv) {
    std::ostringstream os;
    std::istringstream in(csv);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string out;
        bool quoted = false;
        for (char c : line) {
            if (c == '"') quoted = !quoted;
            else if (c == ',' && !quoted) out += ' ';
            else if (c == ' ') out += '_';
            else out += c;
        }
        os << (first ? "# " : "") << out << '\n';
        first = false;
    }
    return os.str();
}

struct ReportResult {
    int exit_code = 0;
    std::vector<std::string> missing, corrupt;
    std::vector<Check> checks;
};

/// Prints pass/fail per check with measured values against thresholds, verifies artifact hashes, and
/// writes gnuplot-ready copies of every CSV into <dir>/plot.
inline ReportResult report(const fs::path& dir, std::ostream& os) {
    ReportResult res;
    if (!fs::exists(dir / "manifest.json"))
        throw ConfigError("no manifest.json in '" + dir.string() + "'; not a run directory");
    const auto m = RunManifest::from_json(json::parse(read_text(dir / "manifest.json")));
    os << "run      " << dir.string() << "\n"
       << "kind     " << m.kind << "\n"
       << "config   " << m.config_hash << "\n"
       << "seed     " << m.seed << "  workers " << m.workers << "\n"
       << "status   " << m.status << "\n";
    if (!m.error.empty()) os << "error    " << m.error << "\n";

    for (const auto& f : m.files) {
        if (!fs::exists(dir / f.name)) res.missing.push_back(f.name);
        else if (!f.sha256.empty() && sha256_file(dir / f.name) != f.sha256) res.corrupt.push_back(f.name);
    }
    if (m.status != "complete" || !res.missing.empty() || !res.corrupt.empty()) {
        if (m.status != "complete") os << "incomplete run: status is '" << m.status << "'\n";
        for (const auto& f : res.missing) os << "missing artifact: " << f << "\n";
        for (const auto& f : res.corrupt) os << "artifact does not match its recorded SHA-256: " << f << "\n";
        res.exit_code = 2;
        if (m.status != "complete" || !fs::exists(dir / "summary.json")) return res;
    }

    const json summary = json::parse(read_text(dir / "summary.json"));
    os << "\n";
    for (const auto& cj : summary.at("checks")) {
        const auto c = Check::from_json(cj);
        res.checks.push_back(c);
        os << (c.pass ? "PASS" : "FAIL") << "  ";
        if (!c.criterion.empty()) os << "[criterion " << c.criterion << "] ";
        os << c.name << ": " << std::setprecision(6) << c.measured << " " << c.relation << " " << c.threshold;
        if (!c.detail.empty()) os << "  (" << c.detail << ")";
        os << "\n";
        if (!c.pass) res.exit_code = 2;
    }

    fs::create_directories(dir / "plot");
    std::vector<std::string> written;
    for (const auto& f : m.files)
        if (fs::path(f.name).extension() == ".csv" && fs::exists(dir / f.name)) {
            const auto out = fs::path("plot") / fs::path(f.name).replace_extension(".dat");
            write_text(dir / out, csv_to_plot_data(read_text(dir / f.name)));
            written.push_back(out.string());
        }
    if (!written.empty()) {
        os << "\nplot data:";
        for (const auto& w : written) os << " " << w;
        os << "\n";
    }
    return res;
}

}  // namespace kinetics::harness
