#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ebsde {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kOutputSchemaVersion = 1;

uint64_t fnv1a64_file(const std::string& path);
uint64_t fnv1a64_bytes(const void* data, size_t n);

// Fixed "%.12g" float formatting keeps reruns byte-identical.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
void write_csv(const std::string& path, const CsvTable& table);

// Two-column whitespace-separated series for external plotting.
void write_series(const std::string& path, const std::vector<std::pair<double, double>>& series);

void write_text_file(const std::string& path, const std::string& content);

class ManifestWriter {
  public:
    ManifestWriter(const std::string& out_dir, const std::string& scenario_name,
                   uint64_t scenario_hash);
    void record_file(const std::string& relative_path);
    void record_timing(const std::string& stage, double seconds);
    // writes manifest.json last; every recorded file gets a checksum
    void finalize();

  private:
    std::string dir_;
    std::string name_;
    uint64_t scenario_hash_;
    std::vector<std::string> files_;
    std::vector<std::pair<std::string, double>> timings_;
};

}  // namespace ebsde
