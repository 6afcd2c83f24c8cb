#ifndef MFMP_RUNNER_HPP
#define MFMP_RUNNER_HPP

#include <optional>
#include <string>

#include "mfmp/scenario.hpp"

namespace mfmp {

struct RunOptions {
    std::string command;
    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> particles;
    std::optional<int> steps;
    int workers = 1;
    bool dump_paths = false;
    bool skip_validate = false;
};

// Executes one CLI command end to end and writes its reports under
// out_dir. Returns the process exit code: 0 success / checks passed,
// 1 a verification check failed, 2 malformed configuration, 3 numerical
// abort. All report files are byte-deterministic for a fixed manifest.
int run_command(const RunOptions& opts);

// the selftest fixture suite (TRIVIAL/DERIVED examples); returns pass count
struct SelftestResult {
    int total = 0;
    int passed = 0;
    std::vector<std::pair<std::string, std::string>> failures; // name, detail
};
SelftestResult run_selftest();

} // namespace mfmp

#endif
