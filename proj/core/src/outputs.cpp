#include "ebsde/outputs.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ebsde {

uint64_t fnv1a64_bytes(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (size_t c = 0; c < table.header.size(); ++c) {
        if (c) out << ',';
        out << table.header[c];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::runtime_error("write_csv: row width mismatch in " + path);
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << row[c];
        }
        out << '\n';
    }
}

void write_series(const std::string& path, const std::vector<std::pair<double, double>>& series) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_series: cannot open " + path);
    for (const auto& [t, v] : series) out << format_double(t) << ' ' << format_double(v) << '\n';
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
    out << content;
}

namespace {
std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}
}  // namespace

ManifestWriter::ManifestWriter(const std::string& out_dir, const std::string& scenario_name,
                               uint64_t scenario_hash)
    : dir_(out_dir), name_(scenario_name), scenario_hash_(scenario_hash) {
    std::filesystem::create_directories(dir_);
}

void ManifestWriter::record_file(const std::string& relative_path) {
    files_.push_back(relative_path);
}

void ManifestWriter::record_timing(const std::string& stage, double seconds) {
    timings_.emplace_back(stage, seconds);
}

void ManifestWriter::finalize() {
    nlohmann::json m;
    m["artifact_version"] = kArtifactVersion;
    m["schema_version"] = kOutputSchemaVersion;
    m["scenario"] = name_;
    m["scenario_hash"] = hex64(scenario_hash_);
    m["files"] = nlohmann::json::array();
    for (const auto& f : files_) {
        nlohmann::json entry;
        entry["path"] = f;
        entry["fnv1a64"] = hex64(fnv1a64_file(dir_ + "/" + f));
        m["files"].push_back(entry);
    }
    m["timings"] = nlohmann::json::array();
    for (const auto& [stage, sec] : timings_) {
        nlohmann::json entry;
        entry["stage"] = stage;
        entry["seconds"] = sec;
        m["timings"].push_back(entry);
    }
    std::ofstream out(dir_ + "/manifest.json");
    if (!out) throw std::runtime_error("ManifestWriter: cannot open " + dir_ + "/manifest.json");
    out << m.dump(2) << '\n';
}

}  // namespace ebsde
