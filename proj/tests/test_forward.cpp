#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfmp/forward.hpp"

using namespace mfmp;

namespace {

GeneratorMatrix no_switch() { return GeneratorMatrix{1, {0.0}}; }

ControlSet box_set() {
    ControlSet s;
    s.finite = false;
    s.lo = -1;
    s.hi = 1;
    return s;
}

CoefficientSet lq1(LQRegime r, int regimes = 1) {
    LQCoefficients lq;
    for (int i = 0; i < regimes; ++i) lq.regimes.push_back(r);
    return lq_to_general(lq);
}

} // namespace

TEST_SUITE("forward") {

TEST_CASE("constant dynamics keep every particle at x0") {
    CoefficientSet c = lq1({});
    NoiseBundle nb = make_noise(no_switch(), {1.0, 50}, 1, 32, 5);
    ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 3.0);
    for (int k = 0; k <= 50; ++k) {
        CHECK(ens.x(7, k) == 3.0);
        CHECK(conditional_mean(ens, k) == 3.0);
    }
}

TEST_CASE("pure exponential drift matches the analytic ODE within 2 dt") {
    LQRegime r;
    r.A1 = 1.0;
    CoefficientSet c = lq1(r);
    TimeGrid grid{1.0, 500};
    NoiseBundle nb = make_noise(no_switch(), grid, 1, 4, 5);
    ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 1.0);
    for (int k = 0; k <= grid.steps; ++k) {
        double truth = std::exp(grid.t(k));
        CHECK(std::abs(ens.x(0, k) - truth) / truth <= 2.0 * grid.dt());
    }
}

// drift -(x - x') cancels under the cross-particle mean, so xhat is a
// Brownian average of size O(N^{-1/2})
TEST_CASE("filtered drift cancellation keeps xhat near zero") {
    LQRegime r;
    r.A1 = -1.0;
    r.A2 = 1.0;
    r.B0 = 1.0;
    CoefficientSet c = lq1(r);
    const int N = 10000;
    NoiseBundle nb = make_noise(no_switch(), {1.0, 100}, 1, N, 21);
    ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 0.0);
    double worst = 0.0;
    for (int k = 0; k <= 100; ++k) worst = std::max(worst, std::abs(ens.xhat[k]));
    CHECK(worst <= 6.0 / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("terminal conditional mean obeys the CLT scale") {
    LQRegime r;
    r.B0 = 1.0;
    CoefficientSet c = lq1(r);
    const int N = 10000;
    int inside = 0;
    const int seeds = 40;
    for (int s = 0; s < seeds; ++s) {
        NoiseBundle nb = make_noise(no_switch(), {1.0, 20}, 1, N, 100 + s);
        ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 0.0);
        if (std::abs(ens.xhat[20]) <= 4.0 / std::sqrt(static_cast<double>(N))) ++inside;
    }
    CHECK(inside >= seeds - 1); // 4-sigma events are rare
}

TEST_CASE("moment probe on constant and zero paths") {
    CoefficientSet c = lq1({});
    NoiseBundle nb = make_noise(no_switch(), {1.0, 10}, 1, 16, 5);
    ParticleEnsemble at2 = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 2.0);
    CHECK(moment_probe(at2, 2.0) == doctest::Approx(4.0));
    ParticleEnsemble at0 = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 0.0);
    CHECK(moment_probe(at0, 4.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(moment_probe(at0, 1.0), std::invalid_argument);
}

TEST_CASE("moment probe is dt-robust within 5 percent") {
    LQRegime r;
    r.A1 = -0.5;
    r.A3 = 1.0;
    r.B0 = 0.5;
    r.B1 = 0.2;
    CoefficientSet c = lq1(r);
    const int N = 20000;
    double est[2];
    int steps[2] = {50, 100};
    for (int j = 0; j < 2; ++j) {
        NoiseBundle nb = make_noise(no_switch(), {1.0, steps[j]}, 1, N, 77);
        ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.3)}, nb, 0.5);
        est[j] = moment_probe(ens, 2.0);
    }
    CHECK(std::abs(est[0] - est[1]) / est[1] <= 0.05);
}

// strong Euler self-consistency: halving dt changes the terminal mean path
// at rate O(dt) for control-free diffusion
TEST_CASE("euler refinement slope lies in [0.7, 1.3]") {
    LQRegime r;
    r.A1 = -1.0;
    r.B1 = 0.5;
    r.B0 = 0.5;
    CoefficientSet c = lq1(r);
    const int N = 2000;
    // common Brownian paths at the coarsest resolution, aggregated for finer
    const int base_steps = 64;
    std::vector<int> levels = {base_steps, 2 * base_steps, 4 * base_steps, 8 * base_steps};
    NoiseBundle fine = make_noise(no_switch(), {1.0, levels.back()}, 1, N, 31);
    // per-particle strong error against the finest level, shared Brownian paths
    std::vector<std::vector<double>> xT;
    for (int steps : levels) {
        NoiseBundle nb;
        nb.grid = {1.0, steps};
        nb.N = N;
        nb.chain = sample_chain(no_switch(), nb.grid, 1, 1);
        nb.dW.assign(static_cast<std::size_t>(N) * steps, 0.0);
        int agg = levels.back() / steps;
        for (int i = 0; i < N; ++i)
            for (int k = 0; k < steps; ++k) {
                double acc = 0.0;
                for (int j = 0; j < agg; ++j) acc += fine.dw(i, k * agg + j);
                nb.dW[static_cast<std::size_t>(i) * steps + k] = acc;
            }
        ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 1.0);
        std::vector<double> xs(N);
        for (int i = 0; i < N; ++i) xs[i] = ens.x(i, steps);
        xT.push_back(std::move(xs));
    }
    std::vector<double> errs, dts;
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        double mse = 0.0;
        for (int i = 0; i < N; ++i) {
            double d = xT[l][i] - xT.back()[i];
            mse += d * d;
        }
        errs.push_back(std::sqrt(mse / N));
        dts.push_back(1.0 / levels[l]);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < errs.size(); ++j) {
        double lx = std::log(dts[j]), ly = std::log(errs[j]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double n = static_cast<double>(errs.size());
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= 0.7);
    CHECK(slope <= 1.3);
}

// particle-count consistency: xhat with N and 4N particles differ at the
// O(N^{-1/2}) scale
TEST_CASE("quadrupling particles shrinks the mean-path gap at the root-N rate") {
    LQRegime r;
    r.A1 = -0.5;
    r.A2 = 0.3;
    r.B0 = 1.0;
    r.B1 = 0.2;
    CoefficientSet c = lq1(r, 2);
    GeneratorMatrix gen{2, {-1.0, 1.0, 1.0, -1.0}};
    double gaps[2];
    int counts[2] = {1000, 4000};
    int reps = 24;
    for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            NoiseBundle a = make_noise(gen, {1.0, 50}, 1, counts[j], 1000 + rep);
            NoiseBundle b = make_noise(gen, {1.0, 50}, 1, counts[j], 5000 + rep);
            b.chain = a.chain; // same common noise, fresh Brownian draws
            ParticleEnsemble ea = simulate_forward(c, {box_set(), constant_policy(0.0)}, a, 0.5);
            ParticleEnsemble eb = simulate_forward(c, {box_set(), constant_policy(0.0)}, b, 0.5);
            double g = 0.0;
            for (int k = 0; k <= 50; ++k) g = std::max(g, std::abs(ea.xhat[k] - eb.xhat[k]));
            acc += g * g;
        }
        gaps[j] = std::sqrt(acc / reps);
    }
    double ratio = gaps[0] / gaps[1];
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.8);
}

// moment bound: the sup-moment estimate stays bounded as N grows
TEST_CASE("sup-moment estimates are uniformly bounded across particle counts") {
    LQRegime r;
    r.A1 = -0.5;
    r.A3 = 1.0;
    r.B0 = 0.6;
    r.B3 = 0.3;
    CoefficientSet c = lq1(r);
    std::vector<double> est;
    for (int N : {100, 1000, 10000}) {
        NoiseBundle nb = make_noise(no_switch(), {1.0, 50}, 1, N, 3);
        ParticleEnsemble ens = simulate_forward(c, {box_set(), constant_policy(0.5)}, nb, 0.5);
        est.push_back(moment_probe(ens, 2.0));
    }
    double lo = *std::min_element(est.begin(), est.end());
    double hi = *std::max_element(est.begin(), est.end());
    CHECK(hi / lo <= 2.0);
}

TEST_CASE("fewer than two particles is rejected") {
    CoefficientSet c = lq1({});
    NoiseBundle nb = make_noise(no_switch(), {1.0, 10}, 1, 1, 5);
    CHECK_THROWS_AS(simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 0.0),
                    std::invalid_argument);
}

TEST_CASE("same seed regenerates identical paths bit for bit") {
    LQRegime r;
    r.A1 = -0.5;
    r.B0 = 1.0;
    CoefficientSet c = lq1(r, 2);
    GeneratorMatrix gen{2, {-2.0, 2.0, 1.0, -1.0}};
    NoiseBundle a = make_noise(gen, {1.0, 50}, 1, 100, 12345);
    NoiseBundle b = make_noise(gen, {1.0, 50}, 1, 100, 12345);
    ParticleEnsemble ea = simulate_forward(c, {box_set(), constant_policy(0.0)}, a, 0.5);
    ParticleEnsemble eb = simulate_forward(c, {box_set(), constant_policy(0.0)}, b, 0.5);
    CHECK(ea.X == eb.X);
    CHECK(ea.xhat == eb.xhat);
}

TEST_CASE("overflowing dynamics abort with a step index") {
    LQCoefficients lq;
    lq.regimes.push_back({});
    CoefficientSet c = lq_to_general(lq);
    c.b = [](double, double x, double, double, int) { return 1e155 * (1.0 + x * x); };
    NoiseBundle nb = make_noise(no_switch(), {1.0, 10}, 1, 4, 5);
    CHECK_THROWS_AS(simulate_forward(c, {box_set(), constant_policy(0.0)}, nb, 1.0),
                    NumericalError);
}

} // TEST_SUITE
