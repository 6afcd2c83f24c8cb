#ifndef MFMP_REPORT_HPP
#define MFMP_REPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfmp {

// Shortest round-trip decimal form; keeps CSV output byte-stable across runs.
std::string fmt_double(double v);

// FNV-1a over a canonical string; used as the manifest hash embedded in
// every report so reruns can be byte-compared.
std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

// Everything that determines a run's outputs. Timings deliberately live
// outside the manifest and outside the reports (stderr only).
struct RunManifest {
    std::string command;
    std::string scenario_path;
    nlohmann::json scenario; // canonical resolved scenario (overrides applied)
    std::uint64_t master_seed = 0;
    std::string out_dir;
    std::string tool_version;

    std::string hash() const;
    nlohmann::json to_json() const;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace mfmp

#endif
