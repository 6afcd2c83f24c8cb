#include <CLI11.hpp>

#include "mfmp/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Conditional mean-field FBSDE toolkit with regime switching"};
    app.require_subcommand(1);

    mfmp::RunOptions opts;
    std::uint64_t seed = 0;
    int particles = 0, steps = 0;

    auto add_common = [&](CLI::App* sub, bool needs_scenario) {
        if (needs_scenario)
            sub->add_option("--scenario", opts.scenario_path, "scenario JSON file")->required();
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--particles", particles, "particle count override");
        sub->add_option("--steps", steps, "time step count override");
        sub->add_option("--workers", opts.workers, "worker thread count");
        sub->add_option("--out", opts.out_dir, "output directory (default ./out)");
        sub->add_flag("--dump-paths", opts.dump_paths, "dump full particle paths");
        sub->add_flag("--skip-validate", opts.skip_validate, "skip assumption validation");
    };

    const char* commands[] = {"simulate",  "adjoint",  "verify-mp", "rate-study",
                              "lq-demo",   "constrained-demo"};
    const char* descs[] = {
        "forward particle system plus the recursive cost",
        "full adjoint bundle along the base control",
        "pointwise maximum-principle check at the configured candidate",
        "order-of-epsilon rate suite, identities and cost expansion",
        "brute-force LQ optimum, positive and negative MP checks",
        "state-constrained verification with penalized multipliers",
    };
    for (std::size_t c = 0; c < std::size(commands); ++c) {
        CLI::App* sub = app.add_subcommand(commands[c], descs[c]);
        add_common(sub, true);
        sub->callback([&opts, name = std::string(commands[c])] { opts.command = name; });
    }
    CLI::App* st = app.add_subcommand("selftest", "run the built-in fixture suite");
    add_common(st, false);
    st->callback([&opts] { opts.command = "selftest"; });

    CLI11_PARSE(app, argc, argv);

    if (app.count_all() > 0) {
        if (seed != 0) opts.seed = seed;
        if (particles != 0) opts.particles = particles;
        if (steps != 0) opts.steps = steps;
    }
    return mfmp::run_command(opts);
}
