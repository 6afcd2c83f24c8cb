#include <doctest.h>

#include <filesystem>

#include "mfmp/report.hpp"
#include "mfmp/runner.hpp"

using namespace mfmp;

namespace {

// small override set so runner tests stay fast
RunOptions small_opts(const std::string& command, const std::string& scenario,
                      const std::string& out) {
    RunOptions o;
    o.command = command;
    o.scenario_path = scenario;
    o.out_dir = out;
    o.particles = 512;
    o.steps = 40;
    return o;
}

std::string scenario_dir() {
    return std::filesystem::path(__FILE__).parent_path().parent_path() / "scenarios";
}

} // namespace

TEST_SUITE("runner") {

TEST_CASE("simulate writes reports and exits cleanly") {
    std::string out = "/tmp/mfmp_test_sim";
    std::filesystem::remove_all(out);
    int rc = run_command(small_opts("simulate", scenario_dir() + "/lq_rich.json", out));
    CHECK(rc == 0);
    CHECK(std::filesystem::exists(out + "/report.json"));
    CHECK(std::filesystem::exists(out + "/chain.csv"));
    CHECK(std::filesystem::exists(out + "/ensemble.csv"));
    CHECK(std::filesystem::exists(out + "/bsde.csv"));
    CHECK(std::filesystem::exists(out + "/validation.json"));
    auto rep = nlohmann::json::parse(read_text_file(out + "/report.json"));
    CHECK(rep["manifest"]["hash"].is_string());
    CHECK(rep["results"]["cost"].is_number());
}

TEST_CASE("reports are byte-identical across reruns of the same manifest") {
    std::string out_a = "/tmp/mfmp_det_a", out_b = "/tmp/mfmp_det_b";
    std::filesystem::remove_all(out_a);
    std::filesystem::remove_all(out_b);
    RunOptions a = small_opts("simulate", scenario_dir() + "/lq_rich.json", out_a);
    RunOptions b = small_opts("simulate", scenario_dir() + "/lq_rich.json", out_b);
    CHECK(run_command(a) == 0);
    CHECK(run_command(b) == 0);
    for (const char* f : {"/ensemble.csv", "/bsde.csv", "/chain.csv"})
        CHECK(read_text_file(out_a + f) == read_text_file(out_b + f));
    // report.json embeds out_dir in the manifest echo; compare results only
    auto ra = nlohmann::json::parse(read_text_file(out_a + "/report.json"));
    auto rb = nlohmann::json::parse(read_text_file(out_b + "/report.json"));
    CHECK(ra["results"].dump() == rb["results"].dump());
    CHECK(ra["manifest"]["hash"] == rb["manifest"]["hash"]);
}

TEST_CASE("worker count does not change the results") {
    std::string out_a = "/tmp/mfmp_w1", out_b = "/tmp/mfmp_w2";
    std::filesystem::remove_all(out_a);
    std::filesystem::remove_all(out_b);
    RunOptions a = small_opts("simulate", scenario_dir() + "/lq_rich.json", out_a);
    RunOptions b = small_opts("simulate", scenario_dir() + "/lq_rich.json", out_b);
    b.workers = 2;
    CHECK(run_command(a) == 0);
    CHECK(run_command(b) == 0);
    CHECK(read_text_file(out_a + "/bsde.csv") == read_text_file(out_b + "/bsde.csv"));
}

TEST_CASE("malformed configuration exits with code 2") {
    std::string bad = "/tmp/mfmp_bad.json";
    write_text_file(bad, "{\"horizon\": 1.0}");
    RunOptions o = small_opts("simulate", bad, "/tmp/mfmp_bad_out");
    CHECK(run_command(o) == 2);

    write_text_file(bad, "not json at all");
    CHECK(run_command(o) == 2);

    RunOptions miss = small_opts("simulate", "/tmp/nope_does_not_exist.json", "/tmp/x");
    CHECK(run_command(miss) == 2);
}

TEST_CASE("verify-mp accepts the shipped optimum and rejects the negative control") {
    std::string out = "/tmp/mfmp_vmp";
    std::filesystem::remove_all(out);
    RunOptions o = small_opts("verify-mp", scenario_dir() + "/lq_demo.json", out);
    o.particles = 2000;
    o.steps = 80;
    CHECK(run_command(o) == 0);
    auto rep = nlohmann::json::parse(read_text_file(out + "/mp_report.json"));
    CHECK(rep["verdict"] == "pass");
    CHECK(rep["violation_fraction"].get<double>() <= 0.01);

    // negative control: overwrite the base policy with the upper bound
    auto j = nlohmann::json::parse(read_text_file(scenario_dir() + "/lq_demo.json"));
    j["control"]["base"] = {{"type", "constant"}, {"value", 1.0}};
    std::string neg = "/tmp/mfmp_neg.json";
    write_text_file(neg, j.dump(2));
    RunOptions on = small_opts("verify-mp", neg, "/tmp/mfmp_vmp_neg");
    on.particles = 2000;
    on.steps = 80;
    CHECK(run_command(on) == 1);
    auto nrep = nlohmann::json::parse(read_text_file("/tmp/mfmp_vmp_neg/mp_report.json"));
    CHECK(nrep["violation_fraction"].get<double>() > 0.10);
}

TEST_CASE("adjoint command writes the summary table") {
    std::string out = "/tmp/mfmp_adj";
    std::filesystem::remove_all(out);
    RunOptions o = small_opts("adjoint", scenario_dir() + "/lq_rich.json", out);
    CHECK(run_command(o) == 0);
    std::string csv = read_text_file(out + "/adjoint_summary.csv");
    CHECK(csv.find("p0_mean") != std::string::npos);
    CHECK(csv.find("gamma_mean") != std::string::npos);
    auto rep = nlohmann::json::parse(read_text_file(out + "/report.json"));
    CHECK(rep["results"]["gamma_positive"].get<bool>());
    CHECK(rep["results"]["terminal_residual_first"].get<double>() <= 1e-10);
}

TEST_CASE("numerical blowup exits with code 3") {
    auto j = nlohmann::json::parse(read_text_file(scenario_dir() + "/lq_rich.json"));
    // explosive drift overflows the forward recursion within the horizon
    j["coefficients"]["regimes"][0]["A1"] = 1e10;
    j["coefficients"]["regimes"][1]["A1"] = 1e10;
    std::string path = "/tmp/mfmp_blowup.json";
    write_text_file(path, j.dump(2));
    RunOptions o = small_opts("simulate", path, "/tmp/mfmp_blowup_out");
    o.skip_validate = true; // huge-but-valid coefficients; skip the sampling pass
    CHECK(run_command(o) == 3);
}

TEST_CASE("selftest command exits zero") {
    RunOptions o;
    o.command = "selftest";
    o.out_dir = "/tmp/mfmp_selftest";
    CHECK(run_command(o) == 0);
}

TEST_CASE("tanh scenario runs the nonlinear path end to end") {
    std::string out = "/tmp/mfmp_tanh";
    std::filesystem::remove_all(out);
    RunOptions o = small_opts("simulate", scenario_dir() + "/tanh_demo.json", out);
    CHECK(run_command(o) == 0);
}

} // TEST_SUITE
