#include "mfmp/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mfmp {

std::string fmt_double(double v) {
    // shortest representation that round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string RunManifest::hash() const {
    std::ostringstream os;
    os << command << '\n'
       << scenario_path << '\n'
       << scenario.dump() << '\n'
       << master_seed << '\n'
       << tool_version;
    return hex64(fnv1a(os.str()));
}

nlohmann::json RunManifest::to_json() const {
    return nlohmann::json{{"command", command},
                          {"scenario_path", scenario_path},
                          {"scenario", scenario},
                          {"master_seed", master_seed},
                          {"out_dir", out_dir},
                          {"tool_version", tool_version},
                          {"hash", hash()}};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace mfmp
