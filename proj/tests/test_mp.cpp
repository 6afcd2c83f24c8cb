#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfmp/mp.hpp"

using namespace mfmp;

namespace {

GeneratorMatrix no_switch() { return GeneratorMatrix{1, {0.0}}; }

CoefficientSet lq1(LQRegime r, int regimes = 1) {
    LQCoefficients lq;
    for (int i = 0; i < regimes; ++i) lq.regimes.push_back(r);
    return lq_to_general(lq);
}

ControlSet finite_set(std::vector<double> vals) {
    ControlSet s;
    s.finite = true;
    s.values = std::move(vals);
    return s;
}

// the switching-weight demo: b = v, sigma = 1, f = x + c5 v, Phi = 0.
// J(v) = x0 T + int (T - s + c5) E[v(s)] ds, so the global optimum over all
// admissible controls is bang-bang with one switch at T + c5.
LQRegime switching_demo(double c5) {
    LQRegime r;
    r.A3 = 1.0;
    r.B0 = 1.0;
    r.C1 = 1.0;
    r.C5 = c5;
    return r;
}

struct Solved {
    CostResult cost;
    FirstOrderAdjoint first;
    SecondOrderAdjoint second;
};

Solved solve_chain(const CoefficientSet& c, const ControlModel& m, const NoiseBundle& nb,
                   double x0) {
    Solved out;
    BsdeOptions opts;
    out.cost = solve_cost(c, m, nb, x0, opts);
    AdjointOptions aopts;
    out.first = solve_first_order_adjoint(c, out.cost.ensemble, out.cost.solution, aopts);
    out.second =
        solve_second_order_adjoint(c, out.cost.ensemble, out.cost.solution, out.first, aopts);
    return out;
}

} // namespace

TEST_SUITE("mp") {

TEST_CASE("hamiltonian direct substitution") {
    LQRegime r;
    r.A3 = 1.0;
    r.B0 = 1.0;
    CoefficientSet c = lq1(r);
    HamiltonianContext ctx;
    ctx.v = 3.0;
    ctx.vbar = 3.0;
    ctx.p0 = 2.0;
    ctx.p1 = 1.0;
    ctx.q0 = 0.5;
    ctx.b_hat = 3.0;
    CHECK(hamiltonian(c, ctx) == doctest::Approx(9.5));

    HamiltonianContext zero = ctx;
    zero.p0 = zero.p1 = zero.q0 = 0.0;
    zero.b_hat = 0.0;
    CHECK(hamiltonian(c, zero) == doctest::Approx(0.0));
}

TEST_CASE("h-function reduces to H when sigma is control-free or v = vbar") {
    LQRegime r;
    r.A3 = 1.0;
    r.B0 = 1.0; // sigma control-free
    CoefficientSet c = lq1(r);
    HamiltonianContext ctx;
    ctx.v = 0.7;
    ctx.vbar = -0.2;
    ctx.p0 = 1.3;
    ctx.q0 = 0.4;
    ctx.b_hat = 0.7;
    CHECK(h_function(c, ctx, 5.0, 2.0, 0.0) == doctest::Approx(hamiltonian(c, ctx)));

    LQRegime rq;
    rq.B3 = 0.8;
    CoefficientSet cq = lq1(rq);
    HamiltonianContext same;
    same.v = 0.4;
    same.vbar = 0.4;
    CHECK(h_function(cq, same, 7.0, 3.0, 0.0) == doctest::Approx(hamiltonian(cq, same)));
}

TEST_CASE("h-function quadratic term isolation") {
    LQRegime r;
    r.B3 = 1.0;
    CoefficientSet c = lq1(r);
    HamiltonianContext ctx;
    ctx.v = 3.0;
    ctx.vbar = 0.0;
    CHECK(h_function(c, ctx, 2.0, 0.0, 0.0) == doctest::Approx(9.0));
}

TEST_CASE("lq pointwise expression vanishes at v = vbar") {
    LQCoefficients lq;
    lq.regimes = {switching_demo(-0.5)};
    CoefficientSet c = lq_to_general(lq);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 40}, 1, 256, 3);
    ControlModel m{finite_set({0.0}), constant_policy(0.0)};
    Solved s = solve_chain(c, m, nb, 0.0);
    MpReport rep = check_mp_lq(lq, s.cost.ensemble, s.first, s.second, {0.0}, 0.01);
    CHECK(rep.violations == 0);
    CHECK(rep.worst_violation == 0.0);
}

// bang-bang degeneracy: B3 = 0, C5 = 1, A3 = 0 makes the expression
// (v - vbar), so the check passes exactly at vbar = min V and fails at max V
TEST_CASE("bang-bang degeneracy forces the lower control bound") {
    LQRegime r;
    r.B0 = 1.0;
    r.C5 = 1.0;
    LQCoefficients lq;
    lq.regimes = {r};
    CoefficientSet c = lq_to_general(lq);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 40}, 1, 256, 5);
    std::vector<double> grid = {-1.0, 0.0, 1.0};

    ControlModel at_min{finite_set(grid), constant_policy(-1.0)};
    Solved smin = solve_chain(c, at_min, nb, 0.0);
    MpReport ok = check_mp_lq(lq, smin.cost.ensemble, smin.first, smin.second, grid, 0.01);
    CHECK(ok.pass);
    CHECK(ok.violations == 0);

    ControlModel at_max{finite_set(grid), constant_policy(1.0)};
    Solved smax = solve_chain(c, at_max, nb, 0.0);
    MpReport bad = check_mp_lq(lq, smax.cost.ensemble, smax.first, smax.second, grid, 0.01);
    CHECK_FALSE(bad.pass);
    CHECK(bad.violation_fraction > 0.10);
}

TEST_CASE("brute force: control-free cost gives a flat table") {
    LQRegime r;
    r.B0 = 1.0;
    r.C1 = 0.5; // A3 = B3 = C5 = 0
    CoefficientSet c = lq1(r);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 30}, 1, 512, 7);
    BsdeOptions opts;
    BruteForceConfig cfg;
    cfg.blocks = 2;
    BruteForceResult res = lq_brute_force(c, finite_set({-1.0, 0.0, 1.0}), nb, 0.2, opts, cfg);
    CHECK(res.table.size() == 9);
    double lo = res.table.front().second, hi = lo;
    for (const auto& [blocks, j] : res.table) {
        lo = std::min(lo, j);
        hi = std::max(hi, j);
    }
    CHECK(hi - lo <= 1e-9); // CRN makes control-free costs identical
    // deterministic tie-break: smallest block values win
    CHECK(res.best_blocks == std::vector<double>{-1.0, -1.0});
}

TEST_CASE("brute force: linear-in-v cost picks the minimum control everywhere") {
    LQRegime r;
    r.B0 = 1.0;
    r.C5 = 1.0; // dynamics control-free, cost increasing in v
    CoefficientSet c = lq1(r);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 30}, 1, 512, 9);
    BsdeOptions opts;
    BruteForceConfig cfg;
    cfg.blocks = 2;
    BruteForceResult res = lq_brute_force(c, finite_set({-1.0, 0.0, 1.0}), nb, 0.0, opts, cfg);
    CHECK(res.best_blocks == std::vector<double>{-1.0, -1.0});
}

TEST_CASE("brute force minimizer is stable across seeds") {
    LQCoefficients lq;
    lq.regimes = {switching_demo(-0.5)};
    CoefficientSet c = lq_to_general(lq);
    BsdeOptions opts;
    BruteForceConfig cfg;
    cfg.blocks = 2;
    std::vector<double> first_best;
    for (std::uint64_t seed : {11u, 22u, 33u}) {
        NoiseBundle nb = make_noise(no_switch(), {1.0, 40}, 1, 2000, seed);
        BruteForceResult res =
            lq_brute_force(c, finite_set({-1.0, 0.0, 1.0}), nb, 0.0, opts, cfg);
        if (first_best.empty())
            first_best = res.best_blocks;
        else
            CHECK(res.best_blocks == first_best);
    }
    // analytic optimum: weight (1 - s) - 0.5 changes sign at s = 0.5
    CHECK(first_best == std::vector<double>{-1.0, 1.0});
}

TEST_CASE("coordinate descent engages above the enumeration budget") {
    LQRegime r;
    r.B0 = 1.0;
    r.C5 = 1.0;
    CoefficientSet c = lq1(r);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 20}, 1, 128, 9);
    BsdeOptions opts;
    BruteForceConfig cfg;
    cfg.blocks = 4;
    cfg.budget = 50; // 3^4 = 81 > 50
    BruteForceResult res = lq_brute_force(c, finite_set({-1.0, 0.0, 1.0}), nb, 0.0, opts, cfg);
    CHECK_FALSE(res.exhaustive);
    CHECK(res.best_blocks == std::vector<double>{-1.0, -1.0, -1.0, -1.0});
}

// the full maximum-principle check at the analytically optimal two-block
// control, plus the negative control at the wrong bound
TEST_CASE("check_mp accepts the optimum and rejects the negative control") {
    LQCoefficients lq;
    lq.regimes = {switching_demo(-0.5), switching_demo(-0.5)};
    CoefficientSet c = lq_to_general(lq);
    GeneratorMatrix gen{2, {-1.0, 1.0, 1.5, -1.5}};
    NoiseBundle nb = make_noise(gen, {1.0, 80}, 1, 2000, 13);
    std::vector<double> grid = {-1.0, 0.0, 1.0};

    ControlModel opt{finite_set(grid), block_policy({-1.0, 1.0}, 1.0)};
    Solved sopt = solve_chain(c, opt, nb, 0.0);
    MpReport ok = check_mp(c, sopt.cost.ensemble, sopt.cost.solution, sopt.first, sopt.second,
                           grid, 0.01);
    INFO("fraction=", ok.violation_fraction, " worst=", ok.worst_violation);
    CHECK(ok.pass);

    ControlModel bad{finite_set(grid), constant_policy(1.0)};
    Solved sbad = solve_chain(c, bad, nb, 0.0);
    MpReport rej = check_mp(c, sbad.cost.ensemble, sbad.cost.solution, sbad.first, sbad.second,
                            grid, 0.01);
    CHECK_FALSE(rej.pass);
    CHECK(rej.violation_fraction > 0.10);
}

// sigma control-free: dropping the P-terms cannot change the verdict
TEST_CASE("first-order-only check agrees when sigma is control-free") {
    LQCoefficients lq;
    lq.regimes = {switching_demo(-0.5)};
    CoefficientSet c = lq_to_general(lq);
    NoiseBundle nb = make_noise(no_switch(), {1.0, 60}, 1, 1000, 17);
    std::vector<double> grid = {-1.0, 0.0, 1.0};
    ControlModel opt{finite_set(grid), block_policy({-1.0, 1.0}, 1.0)};
    Solved s = solve_chain(c, opt, nb, 0.0);
    MpReport with_p = check_mp(c, s.cost.ensemble, s.cost.solution, s.first, s.second, grid,
                               0.01);
    SecondOrderAdjoint zeroed = s.second;
    for (double& v : zeroed.sol.Y) v = 0.0;
    for (double& v : zeroed.sol.Z) v = 0.0;
    MpReport without_p = check_mp(c, s.cost.ensemble, s.cost.solution, s.first, zeroed, grid,
                                  0.01);
    CHECK(with_p.pass == without_p.pass);
    CHECK(with_p.violations == without_p.violations);
}

// refining the time grid must not flip the quantile verdict
TEST_CASE("check_mp verdict is stable under grid refinement") {
    LQCoefficients lq;
    lq.regimes = {switching_demo(-0.5)};
    CoefficientSet c = lq_to_general(lq);
    std::vector<double> grid = {-1.0, 0.0, 1.0};
    double fractions[2];
    int steps_cfg[2] = {40, 80};
    for (int j = 0; j < 2; ++j) {
        NoiseBundle nb = make_noise(no_switch(), {1.0, steps_cfg[j]}, 1, 1000, 31);
        ControlModel opt{finite_set(grid), block_policy({-1.0, 1.0}, 1.0)};
        Solved s = solve_chain(c, opt, nb, 0.0);
        fractions[j] = check_mp(c, s.cost.ensemble, s.cost.solution, s.first, s.second, grid,
                                0.01)
                           .violation_fraction;
    }
    CHECK(std::abs(fractions[0] - fractions[1]) < 0.01);
}

TEST_CASE("constrained verification: vacuous constraint gives lambda = 1") {
    LQRegime r;
    r.A3 = 1.0;
    r.B0 = 0.2;
    r.C5 = 1.0;
    CoefficientSet c = lq1(r);
    ConstraintFn psi;
    psi.psi = [](double, double, double) { return 0.0; };
    psi.psi_x = psi.psi_xp = psi.psi_y = psi.psi_xx = [](double, double, double) { return 0.0; };
    ControlSet vset;
    vset.finite = false;
    vset.lo = -1.0;
    vset.hi = 1.0;
    vset.grid_points = 21;
    ControlModel cand{vset, constant_policy(-1.0)}; // unconstrained optimum of C5 v
    ConstrainedConfig cfg;
    cfg.kappa_ladder = {0.2, 0.1, 0.05};
    BsdeOptions opts;
    ConstrainedReport rep = constrained_verify(c, psi, cand, no_switch(), {1.0, 40}, 1, 0.0, 512,
                                               21, opts, cfg);
    CHECK(rep.norm_error <= 1e-12);
    CHECK(rep.lambda == doctest::Approx(1.0));
    CHECK(rep.mu == doctest::Approx(0.0));
    CHECK(rep.inequality.pass);
}

TEST_CASE("constrained verification at a forced reachable-moment control") {
    // dX = v dt + 0.2 dW, f = v, Phi = 0, constraint E[X(T)] = 0.5:
    // every feasible control costs the same, the constant v = 0.5 is optimal
    LQRegime r;
    r.A3 = 1.0;
    r.B0 = 0.2;
    r.C5 = 1.0;
    CoefficientSet c = lq1(r);
    ConstraintFn psi;
    psi.psi = [](double x, double, double) { return x - 0.5; };
    psi.psi_x = [](double, double, double) { return 1.0; };
    psi.psi_xp = psi.psi_y = psi.psi_xx = [](double, double, double) { return 0.0; };
    ControlSet vset;
    vset.finite = false;
    vset.lo = -1.0;
    vset.hi = 1.0;
    vset.grid_points = 201;
    ControlModel cand{vset, constant_policy(0.5)};
    ConstrainedConfig cfg;
    // kappa large enough that the multiplier jitter |eta|/kappa from the
    // Monte Carlo constraint estimate stays inside the 1e-2 ladder band
    cfg.kappa_ladder = {0.8, 0.4, 0.2};
    BsdeOptions opts;
    ConstrainedReport rep = constrained_verify(c, psi, cand, no_switch(), {1.0, 50}, 1, 0.0,
                                               2000, 23, opts, cfg);
    CHECK(rep.candidate_feasible);
    CHECK(rep.norm_error <= 1e-10);
    CHECK(rep.multipliers_converged);
    // lambda + mu = 0 makes the linear term cancel; both are order 1/sqrt(2)
    CHECK(std::abs(rep.lambda + rep.mu) <= 0.1);
    CHECK(rep.inequality.pass);
}

} // TEST_SUITE
