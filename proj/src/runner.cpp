#include "mfmp/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mfmp/report.hpp"
#include "mfmp/variation.hpp"

namespace mfmp {

namespace {

constexpr const char* kToolVersion = "mfmp 0.1.0";

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

nlohmann::json apply_overrides(nlohmann::json j, const RunOptions& o) {
    if (o.seed) j["seed"] = *o.seed;
    if (o.particles) j["particles"] = *o.particles;
    if (o.steps) j["steps"] = *o.steps;
    return j;
}

void write_report(const std::string& out_dir, const RunManifest& manifest,
                  nlohmann::json results) {
    nlohmann::json rep{{"manifest", manifest.to_json()}, {"results", std::move(results)}};
    write_text_file(out_dir + "/report.json", rep.dump(2) + "\n");
}

// mean/std rows over particles for one component of a grid process
void append_summary_columns(std::ostringstream& os, const std::vector<double>& vals, int N) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= N;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = N > 1 ? var / (N - 1) : 0.0;
    os << ',' << fmt_double(mean) << ',' << fmt_double(std::sqrt(var));
}

AssumptionReport validate_scenario(const Scenario& s, bool skip) {
    if (skip) return {};
    AssumptionReport rep = check_assumptions(s.coeffs, s.box, s.box.budget, s.seed);
    rep.checks.push_back(check_policy(s.base, s.box, s.box.budget, s.seed, s.gen.size));
    return rep;
}

int cmd_simulate(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    NoiseBundle noise = make_noise(s.gen, s.grid, s.initial_regime, s.particles, s.seed);
    CostResult cr = solve_cost(s.coeffs, s.base, noise, s.x0, s.bsde);

    std::ostringstream chain_csv;
    cr.ensemble.noise.chain.write_csv(chain_csv);
    write_text_file(o.out_dir + "/chain.csv", chain_csv.str());

    std::ostringstream ens_csv;
    write_ensemble_csv(cr.ensemble, ens_csv);
    write_text_file(o.out_dir + "/ensemble.csv", ens_csv.str());

    std::ostringstream bsde_csv;
    write_bsde_csv(cr.solution, bsde_csv);
    write_text_file(o.out_dir + "/bsde.csv", bsde_csv.str());

    if (o.dump_paths) {
        std::ostringstream paths_csv;
        write_paths_csv(cr.ensemble, paths_csv);
        write_text_file(o.out_dir + "/paths.csv", paths_csv.str());
    }

    double j_avg = cr.j;
    if (s.chains > 1) {
        CostConfig cc = s.cost_config();
        j_avg = evaluate_cost(s.coeffs, s.base, cc, s.bsde);
    }
    // admissibility probe: sup_k of the empirical eighth moment of the control
    double v8 = 0.0;
    for (int k = 0; k < s.grid.steps; ++k) {
        double m = 0.0;
        for (int i = 0; i < s.particles; ++i) m += std::pow(std::abs(cr.ensemble.v(i, k)), 8.0);
        v8 = std::max(v8, m / s.particles);
    }
    write_report(o.out_dir, manifest,
                 {{"cost", j_avg},
                  {"cost_first_chain", cr.j},
                  {"chains", s.chains},
                  {"control_moment8_sup", v8},
                  {"moment_sup2", moment_probe(cr.ensemble, 2.0)}});
    return 0;
}

int cmd_adjoint(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    NoiseBundle noise = make_noise(s.gen, s.grid, s.initial_regime, s.particles, s.seed);
    CostResult cr = solve_cost(s.coeffs, s.base, noise, s.x0, s.bsde);
    AdjointOptions aopts;
    aopts.bsde = s.bsde;
    aopts.clip_q = s.clip_q;
    FirstOrderAdjoint first = solve_first_order_adjoint(s.coeffs, cr.ensemble, cr.solution, aopts);
    SecondOrderAdjoint second =
        solve_second_order_adjoint(s.coeffs, cr.ensemble, cr.solution, first, aopts);

    std::vector<char> mask(static_cast<std::size_t>(s.grid.steps), 0);
    if (s.spike.measure() > 0.0) mask = s.spike.step_mask(s.grid);
    BackwardSolution aux = solve_auxiliary(s.coeffs, cr.ensemble, cr.solution, first, second,
                                           s.alt.policy.eval, mask, aopts);
    std::vector<double> gamma = solve_gamma(s.coeffs, cr.ensemble, cr.solution);

    const int N = s.particles, steps = s.grid.steps;
    std::ostringstream csv;
    csv << "t,p0_mean,p0_std,p1_mean,p1_std,q0_mean,q0_std,q1_mean,q1_std,"
           "P0_mean,P0_std,P1_mean,P1_std,ytilde_mean,ytilde_std,gamma_mean,gamma_std\n";
    std::vector<double> col(static_cast<std::size_t>(N));
    for (int k = 0; k <= steps; ++k) {
        std::ostringstream row;
        row << fmt_double(s.grid.t(k));
        auto add = [&](auto&& get) {
            for (int i = 0; i < N; ++i) col[static_cast<std::size_t>(i)] = get(i);
            append_summary_columns(row, col, N);
        };
        add([&](int i) { return first.p0(k, i); });
        add([&](int i) { return first.p1(k, i); });
        add([&](int i) { return k < steps ? first.q0(k, i) : 0.0; });
        add([&](int i) { return k < steps ? first.q1(k, i) : 0.0; });
        add([&](int i) { return second.P0(k, i); });
        add([&](int i) { return second.P1(k, i); });
        add([&](int i) { return aux.y(k, i); });
        add([&](int i) { return gamma[static_cast<std::size_t>(i) * (steps + 1) + k]; });
        csv << row.str() << '\n';
    }
    write_text_file(o.out_dir + "/adjoint_summary.csv", csv.str());

    // terminal-condition residuals (exact by construction, reported anyway)
    double term_p = 0.0, term_P = 0.0;
    for (int i = 0; i < N; ++i) {
        double xT = cr.ensemble.x(i, steps), xh = cr.ensemble.xhat[steps];
        int rT = cr.ensemble.terminal_regime();
        term_p = std::max(term_p, std::abs(first.p0(steps, i) - s.coeffs.phi_x(xT, xh, rT)));
        term_p = std::max(term_p, std::abs(first.p1(steps, i) - s.coeffs.phi_xp(xT, xh, rT)));
        term_P = std::max(term_P, std::abs(second.P0(steps, i) - s.coeffs.phi_xx(xT, xh, rT)));
        term_P = std::max(term_P, std::abs(second.P1(steps, i)));
    }
    bool gamma_positive = true;
    for (double g : gamma) gamma_positive = gamma_positive && g > 0.0;

    write_report(o.out_dir, manifest,
                 {{"cost", cr.j},
                  {"ytilde0", aux.y0_mean()},
                  {"terminal_residual_first", term_p},
                  {"terminal_residual_second", term_P},
                  {"gamma_positive", gamma_positive}});
    return 0;
}

int cmd_verify_mp(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    NoiseBundle noise = make_noise(s.gen, s.grid, s.initial_regime, s.particles, s.seed);
    CostResult cr = solve_cost(s.coeffs, s.base, noise, s.x0, s.bsde);
    AdjointOptions aopts;
    aopts.bsde = s.bsde;
    aopts.clip_q = s.clip_q;
    FirstOrderAdjoint first = solve_first_order_adjoint(s.coeffs, cr.ensemble, cr.solution, aopts);
    SecondOrderAdjoint second =
        solve_second_order_adjoint(s.coeffs, cr.ensemble, cr.solution, first, aopts);

    MpReport rep = check_mp(s.coeffs, cr.ensemble, cr.solution, first, second,
                            s.base.set.grid(), s.mp_quantile, o.workers);
    rep.candidate = s.base.policy.describe;

    nlohmann::json results{{"manifest_hash", manifest.hash()},
                           {"scenario", o.scenario_path},
                           {"candidate", rep.candidate},
                           {"violation_fraction", rep.violation_fraction},
                           {"worst_violation", rep.worst_violation},
                           {"tol", "3 local standard errors"},
                           {"verdict", rep.pass ? "pass" : "fail"},
                           {"cost", cr.j}};
    if (s.is_lq) {
        MpReport lqrep = check_mp_lq(s.lq, cr.ensemble, first, second, s.base.set.grid(),
                                     s.mp_quantile);
        results["lq_form"] = lqrep.to_json();
    }
    write_text_file(o.out_dir + "/mp_report.json", results.dump(2) + "\n");
    write_report(o.out_dir, manifest, results);
    return rep.pass ? 0 : 1;
}

int cmd_rate_study(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    PipelineConfig pc{s.grid, s.gen, s.initial_regime, s.x0, s.particles, s.seed, {}};
    pc.adjoint.bsde = s.bsde;
    VariationPipeline pipe(s.coeffs, s.base, s.alt, pc);
    RateStudy study = rate_probe(pipe, s.spike, s.spike_t0, s.rate.reps, s.rate.eps_ref,
                                 s.rate.beta);

    std::ostringstream rate_csv;
    write_rate_csv(study, rate_csv);
    write_text_file(o.out_dir + "/rate_report.csv", rate_csv.str());

    std::ostringstream id_csv;
    write_identity_csv(study.identities, id_csv);
    write_text_file(o.out_dir + "/identity_report.csv", id_csv.str());

    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : study.fits)
        fits.push_back({{"quantity", f.quantity},
                        {"slope", f.slope},
                        {"stderr", f.slope_stderr},
                        {"gate", f.gate},
                        {"verdict", f.verdict}});
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : study.identities)
        ids.push_back({{"identity", id.name},
                       {"rel_rms", id.rel_rms},
                       {"tolerance", id.tolerance},
                       {"verdict", id.pass ? "pass" : "fail"}});
    bool pass = study.all_gates_pass();
    write_report(o.out_dir, manifest,
                 {{"fits", fits},
                  {"identities", ids},
                  {"expansion_pass", study.expansion_pass},
                  {"verdict", pass ? "pass" : "fail"}});
    return pass ? 0 : 1;
}

int cmd_lq_demo(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    if (!s.is_lq) throw ConfigError("lq-demo requires an lq coefficient family");
    NoiseBundle noise = make_noise(s.gen, s.grid, s.initial_regime, s.particles, s.seed);
    BruteForceResult bf = lq_brute_force(s.coeffs, s.base.set, noise, s.x0, s.bsde, s.brute);

    std::ostringstream table_csv;
    write_cost_table_csv(bf, table_csv);
    write_text_file(o.out_dir + "/cost_table.csv", table_csv.str());

    auto verify_at = [&](const ControlModel& candidate) {
        CostResult cr = solve_cost(s.coeffs, candidate, noise, s.x0, s.bsde);
        AdjointOptions aopts;
        aopts.bsde = s.bsde;
        FirstOrderAdjoint first =
            solve_first_order_adjoint(s.coeffs, cr.ensemble, cr.solution, aopts);
        SecondOrderAdjoint second =
            solve_second_order_adjoint(s.coeffs, cr.ensemble, cr.solution, first, aopts);
        MpReport general = check_mp(s.coeffs, cr.ensemble, cr.solution, first, second,
                                    s.base.set.grid(), s.mp_quantile, o.workers);
        MpReport lqform = check_mp_lq(s.lq, cr.ensemble, first, second, s.base.set.grid(),
                                      s.mp_quantile);
        general.candidate = candidate.policy.describe;
        lqform.candidate = candidate.policy.describe;
        return std::make_pair(general, lqform);
    };

    ControlModel best{s.base.set, block_policy(bf.best_blocks, s.grid.horizon)};
    auto [opt_general, opt_lq] = verify_at(best);

    // negative control: constant at the upper end of V
    ControlModel negative{s.base.set, constant_policy(s.base.set.max_value())};
    auto [neg_general, neg_lq] = verify_at(negative);

    bool pass = opt_general.pass && opt_lq.pass && neg_general.violation_fraction > 0.10;
    write_report(o.out_dir, manifest,
                 {{"best_blocks", bf.best_blocks},
                  {"best_cost", bf.best_cost},
                  {"exhaustive", bf.exhaustive},
                  {"optimum_check", opt_general.to_json()},
                  {"optimum_check_lq", opt_lq.to_json()},
                  {"negative_check", neg_general.to_json()},
                  {"negative_check_lq", neg_lq.to_json()},
                  {"verdict", pass ? "pass" : "fail"}});
    return pass ? 0 : 1;
}

int cmd_constrained(const Scenario& s, const RunOptions& o, const RunManifest& manifest) {
    if (!s.constraint) throw ConfigError("constrained-demo requires a constraint section");
    ConstrainedReport rep =
        constrained_verify(s.coeffs, *s.constraint, s.base, s.gen, s.grid, s.initial_regime,
                           s.x0, s.particles, s.seed, s.bsde, s.constrained);
    bool pass = rep.norm_error <= 1e-10 && rep.multipliers_converged && rep.inequality.pass;
    nlohmann::json results = rep.to_json();
    results["manifest_hash"] = manifest.hash();
    results["verdict"] = pass ? "pass" : "fail";
    write_text_file(o.out_dir + "/constrained_report.json", results.dump(2) + "\n");
    write_report(o.out_dir, manifest, results);
    return pass ? 0 : 1;
}

} // namespace

int run_command(const RunOptions& opts) {
    Timer timer;
    try {
        std::filesystem::create_directories(opts.out_dir);

        if (opts.command == "selftest") {
            SelftestResult r = run_selftest();
            for (const auto& [name, detail] : r.failures)
                std::cerr << "selftest FAIL " << name << ": " << detail << '\n';
            std::cerr << "selftest: " << r.passed << "/" << r.total << " fixtures passed ("
                      << timer.seconds() << "s)\n";
            nlohmann::json results{{"total", r.total},
                                   {"passed", r.passed},
                                   {"verdict", r.passed == r.total ? "pass" : "fail"}};
            write_text_file(opts.out_dir + "/selftest.json", results.dump(2) + "\n");
            return r.passed == r.total ? 0 : 1;
        }

        nlohmann::json raw;
        {
            std::ifstream is(opts.scenario_path);
            if (!is) throw ConfigError("cannot open scenario file: " + opts.scenario_path);
            try {
                raw = nlohmann::json::parse(is);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("scenario parse error: ") + e.what());
            }
        }
        raw = apply_overrides(raw, opts);
        Scenario s = scenario_from_json(raw);
        s.bsde.workers = opts.workers;

        RunManifest manifest;
        manifest.command = opts.command;
        manifest.scenario_path = opts.scenario_path;
        manifest.scenario = raw;
        manifest.master_seed = s.seed;
        manifest.out_dir = opts.out_dir;
        manifest.tool_version = kToolVersion;

        AssumptionReport validation = validate_scenario(s, opts.skip_validate);
        if (!opts.skip_validate) {
            write_text_file(opts.out_dir + "/validation.json",
                            validation.to_json().dump(2) + "\n");
            if (!validation.all_pass())
                throw ConfigError("scenario failed assumption validation (see validation.json; "
                                  "use --skip-validate to override)");
        }

        int rc = 0;
        if (opts.command == "simulate")
            rc = cmd_simulate(s, opts, manifest);
        else if (opts.command == "adjoint")
            rc = cmd_adjoint(s, opts, manifest);
        else if (opts.command == "verify-mp")
            rc = cmd_verify_mp(s, opts, manifest);
        else if (opts.command == "rate-study")
            rc = cmd_rate_study(s, opts, manifest);
        else if (opts.command == "lq-demo")
            rc = cmd_lq_demo(s, opts, manifest);
        else if (opts.command == "constrained-demo")
            rc = cmd_constrained(s, opts, manifest);
        else
            throw ConfigError("unknown command: " + opts.command);

        std::cerr << opts.command << " finished in " << timer.seconds() << "s, exit " << rc
                  << '\n';
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << " (step " << e.step << ")\n";
        return 3;
    }
}

} // namespace mfmp
