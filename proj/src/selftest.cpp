#include <cmath>
#include <functional>
#include <sstream>

#include "mfmp/adjoint.hpp"
#include "mfmp/mp.hpp"
#include "mfmp/rng.hpp"
#include "mfmp/runner.hpp"
#include "mfmp/variation.hpp"

namespace mfmp {

namespace {

struct Fixture {
    std::string name;
    std::function<std::string()> run; // empty string = pass, else failure detail
};

std::string expect(bool ok, const std::string& detail) { return ok ? "" : detail; }

std::string expect_near(double got, double want, double tol, const std::string& what) {
    if (std::abs(got - want) <= tol) return "";
    std::ostringstream os;
    os << what << ": got " << got << ", want " << want << " (tol " << tol << ")";
    return os.str();
}

GeneratorMatrix two_state(double l12, double l21) {
    return GeneratorMatrix{2, {-l12, l12, l21, -l21}};
}

LQCoefficients lq_scalar(LQRegime r, int regimes = 1) {
    LQCoefficients lq;
    for (int i = 0; i < regimes; ++i) lq.regimes.push_back(r);
    return lq;
}

ControlSet interval_set(double lo, double hi) {
    ControlSet s;
    s.finite = false;
    s.lo = lo;
    s.hi = hi;
    return s;
}

std::vector<Fixture> fixtures() {
    std::vector<Fixture> fs;

    fs.push_back({"chain_absorbing_constant", [] {
        GeneratorMatrix gen{2, {0, 0, 0, 0}};
        ChainPath p = sample_chain(gen, {1.0, 50}, 2, 7);
        for (int k = 0; k <= 50; ++k)
            if (p.grid_left[static_cast<std::size_t>(k)] != 2) return std::string("state moved");
        return std::string();
    }});

    fs.push_back({"chain_single_regime", [] {
        GeneratorMatrix gen{1, {0.0}};
        ChainPath p = sample_chain(gen, {1.0, 10}, 1, 3);
        return expect(p.num_jumps() == 0 && p.terminal_state() == 1, "expected constant path");
    }});

    fs.push_back({"chain_left_limit_tie", [] {
        ChainPath p;
        p.grid = {1.0, 10};
        p.num_regimes = 3;
        p.initial_state = 1;
        p.jump_times = {0.3, 0.7};
        p.jump_states = {3, 2};
        std::string err = expect(p.left_limit_state(0.7) == 3, "left limit at a jump");
        if (!err.empty()) return err;
        err = expect(p.state_at(0.7) == 2, "cadlag value at a jump");
        if (!err.empty()) return err;
        return expect(p.left_limit_state(0.5) == 3 && p.left_limit_state(0.2) == 1,
                      "interval bookkeeping");
    }});

    fs.push_back({"chain_jump_count_oracle", [] {
        // 2-state, both rates 2: jump intensity is 2 everywhere, so the
        // expected jump count on [0,1] is 2; oracle via discrete thinning
        GeneratorMatrix gen = two_state(2.0, 2.0);
        const int paths = 20000;
        double mean = 0.0;
        for (int m = 0; m < paths; ++m)
            mean += sample_chain(gen, {1.0, 20}, 1, stream_key(99, "selftest-chain", m)).num_jumps();
        mean /= paths;
        // thinning oracle on a fine lattice
        const int lat = 4000;
        Rng rng = make_stream(99, "selftest-thinning");
        double oracle = 0.0;
        const int opaths = 20000;
        for (int m = 0; m < opaths; ++m) {
            int jumps = 0;
            for (int k = 0; k < lat; ++k)
                if (rng.next_uniform() < 2.0 / lat) ++jumps;
            oracle += jumps;
        }
        oracle /= opaths;
        double se = std::sqrt(2.0 / paths) * 3 + std::sqrt(2.0 / opaths) * 3;
        return expect_near(mean, oracle, se + 0.01, "mean jump count vs thinning oracle");
    }});

    fs.push_back({"lq_map_zero", [] {
        CoefficientSet c = lq_to_general(lq_scalar({}));
        bool ok = c.b(0, 1, 2, 3, 1) == 0 && c.sigma(0, 1, 2, 3, 1) == 0 &&
                  c.f(0, 1, 2, 3, 4, 5, 1) == 0 && c.phi(1, 2, 1) == 0;
        return expect(ok, "zero table should map to zero functions");
    }});

    fs.push_back({"lq_map_eval", [] {
        LQRegime r;
        r.A1 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        return expect_near(c.b(0.0, 2.0, 5.0, 7.0, 1), 2.0, 0.0, "b = A1 x");
    }});

    fs.push_back({"lq_map_phi_derivatives", [] {
        LQRegime r;
        r.D1 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        std::string err = expect_near(c.phi_xx(3.0, 4.0, 1), 2.0, 0.0, "Phi_xx");
        if (!err.empty()) return err;
        return expect_near(c.phi_xxp(3.0, 4.0, 1), 0.0, 0.0, "Phi_xx'");
    }});

    fs.push_back({"spike_overlay_piecewise", [] {
        TimeGrid grid{1.0, 100};
        ControlModel base{interval_set(-2, 2), constant_policy(0.0)};
        ControlModel alt{base.set, constant_policy(1.0)};
        SpikeSpec empty;
        empty.windows = {};
        const ControlModel& same = spike_overlay(base, alt, empty, grid);
        std::string err =
            expect(same.policy.eval(0.45, 0, 0, 1) == 0.0, "empty window must return base");
        if (!err.empty()) return err;
        ControlModel over = spike_overlay(base, alt, SpikeSpec::single(0.4, 0.1), grid);
        err = expect(over.policy.eval(0.45, 0, 0, 1) == 1.0, "inside window -> alt");
        if (!err.empty()) return err;
        return expect(over.policy.eval(0.6, 0, 0, 1) == 0.0, "outside window -> base");
    }});

    fs.push_back({"forward_constant_dynamics", [] {
        CoefficientSet c = lq_to_general(lq_scalar({}));
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 50}, 1, 64, 5);
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        ParticleEnsemble ens = simulate_forward(c, m, nb, 3.0);
        for (int k = 0; k <= 50; ++k)
            if (std::abs(conditional_mean(ens, k) - 3.0) > 0.0)
                return std::string("xhat moved under zero dynamics");
        return std::string();
    }});

    fs.push_back({"forward_exponential_ode", [] {
        LQRegime r;
        r.A1 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        TimeGrid grid{1.0, 400};
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, grid, 1, 8, 5);
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        ParticleEnsemble ens = simulate_forward(c, m, nb, 1.0);
        double worst = 0.0;
        for (int k = 0; k <= grid.steps; ++k)
            worst = std::max(worst,
                             std::abs(ens.x(0, k) - std::exp(grid.t(k))) / std::exp(grid.t(k)));
        return expect(worst <= 2.0 * grid.dt(), "Euler error above 2*dt on exp growth");
    }});

    fs.push_back({"forward_filtered_drift_cancels", [] {
        LQRegime r;
        r.A1 = -1;
        r.A2 = 1;
        r.B0 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        const int N = 4096;
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 100}, 1, N, 11);
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        ParticleEnsemble ens = simulate_forward(c, m, nb, 0.0);
        double worst = 0.0;
        for (int k = 0; k <= 100; ++k) worst = std::max(worst, std::abs(ens.xhat[k]));
        return expect(worst <= 6.0 / std::sqrt(static_cast<double>(N)),
                      "filtered drift did not cancel");
    }});

    fs.push_back({"conditional_mean_trivial", [] {
        CoefficientSet c = lq_to_general(lq_scalar({}));
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 10}, 1, 16, 5);
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        ParticleEnsemble ens = simulate_forward(c, m, nb, 2.5);
        return expect_near(conditional_mean(ens, 5), 2.5, 0.0, "mean of equal particles");
    }});

    fs.push_back({"moment_probe_trivial", [] {
        CoefficientSet c = lq_to_general(lq_scalar({}));
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 10}, 1, 16, 5);
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        ParticleEnsemble ens = simulate_forward(c, m, nb, 2.0);
        return expect_near(moment_probe(ens, 2.0), 4.0, 1e-12, "constant paths, beta=2");
    }});

    fs.push_back({"bsde_constant_terminal", [] {
        CoefficientSet c = lq_to_general(lq_scalar({{}}));
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 40}, 1, 256, 7);
        LQRegime r;
        r.B0 = 1;
        ParticleEnsemble ens = simulate_forward(lq_to_general(lq_scalar(r)),
                                                {interval_set(-1, 1), constant_policy(0.0)}, nb,
                                                0.0);
        BsdeOptions opts;
        auto driver = [](int, int, const double*, const double*, double* o) { o[0] = 0.0; };
        auto terminal = [](int, double* o) { o[0] = 5.0; };
        BackwardSolution sol = solve_bsde(ens, 1, driver, terminal, opts);
        double worst_y = 0.0, worst_z = 0.0;
        for (int k = 0; k < 40; ++k)
            for (int i = 0; i < ens.N; ++i) {
                worst_y = std::max(worst_y, std::abs(sol.y(k, i) - 5.0));
                worst_z = std::max(worst_z, std::abs(sol.z(k, i)));
            }
        std::string err = expect(worst_y <= 1e-12, "Y must equal the constant terminal");
        if (!err.empty()) return err;
        return expect(worst_z <= 1e-12, "Z must vanish for a constant terminal");
    }});

    fs.push_back({"bsde_constant_driver", [] {
        LQRegime r;
        r.B0 = 1;
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 50}, 1, 128, 7);
        ParticleEnsemble ens = simulate_forward(lq_to_general(lq_scalar(r)),
                                                {interval_set(-1, 1), constant_policy(0.0)}, nb,
                                                0.0);
        BsdeOptions opts;
        const double rate = 0.7, cterm = 2.0;
        auto driver = [rate](int, int, const double*, const double*, double* o) { o[0] = rate; };
        auto terminal = [cterm](int, double* o) { o[0] = cterm; };
        BackwardSolution sol = solve_bsde(ens, 1, driver, terminal, opts);
        double worst = 0.0;
        for (int k = 0; k <= 50; ++k)
            worst = std::max(worst, std::abs(sol.y(k, 0) - (cterm + rate * (1.0 - ens.grid.t(k)))));
        return expect(worst <= 1e-10, "deterministic recursion must be exact");
    }});

    fs.push_back({"cost_trivial_values", [] {
        // f = 0, Phi = 5 -> J = 5; f = 1, Phi = 0, T = 1 -> J = 1
        LQRegime dyn;
        dyn.B0 = 1;
        CostConfig cc;
        cc.grid = {1.0, 40};
        cc.gen = GeneratorMatrix{1, {0.0}};
        cc.particles = 128;
        cc.seed = 3;
        BsdeOptions opts;
        LQRegime r1 = dyn;
        r1.D1 = 0;
        CoefficientSet c1 = lq_to_general(lq_scalar(r1));
        // Phi = 5 via C0/D trick: use constant terminal through phi override
        CoefficientSet c5 = c1;
        c5.phi = [](double, double, int) { return 5.0; };
        c5.phi_x = c5.phi_xp = [](double, double, int) { return 0.0; };
        c5.phi_xx = c5.phi_xxp = c5.phi_xpxp = [](double, double, int) { return 0.0; };
        ControlModel m{interval_set(-1, 1), constant_policy(0.0)};
        double j5 = evaluate_cost(c5, m, cc, opts);
        std::string err = expect_near(j5, 5.0, 1e-10, "J for f=0, Phi=5");
        if (!err.empty()) return err;
        LQRegime r2 = dyn;
        r2.C0 = 1;
        double j1 = evaluate_cost(lq_to_general(lq_scalar(r2)), m, cc, opts);
        return expect_near(j1, 1.0, 1e-10, "J for f=1, Phi=0");
    }});

    fs.push_back({"gamma_trivial", [] {
        LQRegime r;
        r.B0 = 1;
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 50}, 1, 64, 7);
        CoefficientSet c0 = lq_to_general(lq_scalar(r));
        ParticleEnsemble ens = simulate_forward(c0, {interval_set(-1, 1), constant_policy(0.0)},
                                                nb, 0.0);
        BsdeOptions opts;
        auto d0 = [](int, int, const double*, const double*, double* o) { o[0] = 0.0; };
        auto t0 = [](int, double* o) { o[0] = 0.0; };
        BackwardSolution cost = solve_bsde(ens, 1, d0, t0, opts);
        std::vector<double> g = solve_gamma(c0, ens, cost);
        for (double v : g)
            if (v != 1.0) return std::string("Gamma must be identically 1 when f = 0");
        LQRegime ry = r;
        ry.C3 = 0.8; // f_y = a
        CoefficientSet cy = lq_to_general(lq_scalar(ry));
        std::vector<double> gy = solve_gamma(cy, ens, cost);
        double worst = 0.0;
        for (int k = 0; k <= 50; ++k)
            worst = std::max(worst, std::abs(gy[static_cast<std::size_t>(k)] -
                                             std::exp(0.8 * ens.grid.t(k))));
        return expect(worst <= 1e-10, "Gamma must equal exp(a t) for constant f_y");
    }});

    fs.push_back({"hamiltonian_arithmetic", [] {
        // b = v, sigma = 1, f = 0, p0 = 2, p1 = 1, q0 = 0.5, v = 3 -> 9.5
        LQRegime r;
        r.A3 = 1;
        r.B0 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        HamiltonianContext ctx;
        ctx.v = 3;
        ctx.vbar = 3;
        ctx.p0 = 2;
        ctx.p1 = 1;
        ctx.q0 = 0.5;
        ctx.b_hat = 3.0; // E[b] = v for deterministic v
        std::string err = expect_near(hamiltonian(c, ctx), 9.5, 1e-12, "H direct substitution");
        if (!err.empty()) return err;
        HamiltonianContext zero = ctx;
        zero.p0 = zero.p1 = zero.q0 = 0;
        zero.b_hat = 0;
        err = expect_near(hamiltonian(c, zero) - 0.0, 0.0, 1e-12, "H with zero adjoints");
        if (!err.empty()) return err;
        // quadratic term isolation: B3 = 1, P0 = 2, v - vbar = 3 -> 9
        LQRegime rq;
        rq.B3 = 1;
        CoefficientSet cq = lq_to_general(lq_scalar(rq));
        HamiltonianContext cq_ctx;
        cq_ctx.v = 3;
        cq_ctx.vbar = 0;
        double hf = h_function(cq, cq_ctx, 2.0, 0.0, 0.0);
        return expect_near(hf, 9.0, 1e-12, "H-function quadratic isolation");
    }});

    fs.push_back({"variation_zero_spike", [] {
        LQRegime r;
        r.A1 = -0.5;
        r.A3 = 1;
        r.B0 = 0.5;
        r.B3 = 0.3;
        r.C1 = 0.4;
        r.D1 = 0.5;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        TimeGrid grid{1.0, 40};
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, grid, 1, 128, 13);
        ControlModel base{interval_set(-1, 1), constant_policy(0.1)};
        ParticleEnsemble ens = simulate_forward(c, base, nb, 0.2);
        std::vector<char> empty_mask(40, 0);
        PolicyFn alt = base.policy.eval;
        VariationProcess x1 = solve_first_variation(c, ens, alt, empty_mask);
        for (int k = 0; k <= 40; ++k)
            if (x1.hat[static_cast<std::size_t>(k)] != 0.0)
                return std::string("X1 must vanish without a spike window");
        // alt = base on a nonempty window also gives zero
        std::vector<char> mask(40, 0);
        for (int k = 10; k < 20; ++k) mask[static_cast<std::size_t>(k)] = 1;
        VariationProcess x1b = solve_first_variation(c, ens, alt, mask);
        for (int i = 0; i < ens.N; ++i)
            for (int k = 0; k <= 40; ++k)
                if (x1b.x(i, k) != 0.0) return std::string("X1 must vanish when alt = base");
        return std::string();
    }});

    fs.push_back({"singleton_control_no_violations", [] {
        LQRegime r;
        r.A3 = 1;
        r.B0 = 1;
        r.C1 = 1;
        CoefficientSet c = lq_to_general(lq_scalar(r));
        ControlSet vset;
        vset.finite = true;
        vset.values = {0.0};
        NoiseBundle nb = make_noise(GeneratorMatrix{1, {0.0}}, {1.0, 40}, 1, 256, 17);
        BsdeOptions opts;
        CostResult cr = solve_cost(c, {vset, constant_policy(0.0)}, nb, 0.0, opts);
        AdjointOptions aopts;
        FirstOrderAdjoint first = solve_first_order_adjoint(c, cr.ensemble, cr.solution, aopts);
        SecondOrderAdjoint second =
            solve_second_order_adjoint(c, cr.ensemble, cr.solution, first, aopts);
        MpReport rep = check_mp(c, cr.ensemble, cr.solution, first, second, vset.grid(), 0.01);
        return expect(rep.violations == 0, "singleton control set must have zero violations");
    }});

    return fs;
}

} // namespace

SelftestResult run_selftest() {
    SelftestResult out;
    for (const auto& f : fixtures()) {
        ++out.total;
        std::string detail;
        try {
            detail = f.run();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (detail.empty())
            ++out.passed;
        else
            out.failures.emplace_back(f.name, detail);
    }
    return out;
}

} // namespace mfmp
