#pragma once

#include <array>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "kinetics/errors.hpp"
#include "kinetics/harness/config.hpp"

namespace kinetics::harness {

inline constexpr const char* tool_version = "0.1.0";

inline std::string to_hex(const unsigned char* p, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[p[i] >> 4];
        out[2 * i + 1] = digits[p[i] & 15];
    }
    return out;
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    return to_hex(md, len);
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("SHA-256 init failed");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    return to_hex(md, len);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t, bool compact = false) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, compact ? "%Y%m%dT%H%M%SZ" : "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct ArtifactEntry {
    std::string name;
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string config_hash;  ///< SHA-256 of the materialized config
    std::string version = tool_version;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string kind;
    std::string status = "running";  ///< "running", "complete" or "failed"
    std::string start_time, end_time;
    double wall_seconds = 0.0;
    json config;
    std::vector<ArtifactEntry> files;
    std::string error;

    static json module_versions() {
        return {{"kernels", "1"}, {"collision_geometry", "1"}, {"povzner", "1"},
                {"dsmc_engine", "1"}, {"fourier_probe", "1"}, {"harness_cli", "1"}};
    }

    json to_json() const {
        json j;
        j["config_hash"] = config_hash;
        j["tool_version"] = version;
        j["module_versions"] = module_versions();
        j["kind"] = kind;
        j["seed"] = seed;
        j["workers"] = workers;
        j["status"] = status;
        j["start_time"] = start_time;
        j["end_time"] = end_time;
        j["wall_seconds"] = wall_seconds;
        j["config"] = config;
        json f = json::array();
        for (const auto& a : files) f.push_back({{"name", a.name}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        j["files"] = f;
        if (!error.empty()) j["error"] = error;
        return j;
    }

    static RunManifest from_json(const json& j) {
        RunManifest m;
        m.config_hash = j.value("config_hash", "");
        m.version = j.value("tool_version", "");
        m.seed = j.value("seed", std::uint64_t{0});
        m.workers = j.value("workers", 1u);
        m.kind = j.value("kind", "");
        m.status = j.value("status", "");
        m.start_time = j.value("start_time", "");
        m.end_time = j.value("end_time", "");
        m.wall_seconds = j.value("wall_seconds", 0.0);
        m.config = j.value("config", json::object());
        m.error = j.value("error", "");
        if (j.contains("files"))
            for (const auto& f : j.at("files"))
                m.files.push_back({f.value("name", ""), f.value("sha256", ""), f.value("bytes", std::uintmax_t{0})});
        return m;
    }
};

inline std::string config_hash(const ExperimentSpec& spec) { return sha256_hex(spec.materialized().dump()); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace kinetics::harness
