#include "mfmp/forward.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfmp/parallel.hpp"
#include "mfmp/report.hpp"
#include "mfmp/rng.hpp"

namespace mfmp {

NoiseBundle make_noise(const GeneratorMatrix& gen, const TimeGrid& grid, int initial_state,
                       int N, std::uint64_t seed, std::uint64_t rep) {
    if (N < 1) throw std::invalid_argument("particle count must be >= 1");
    NoiseBundle nb;
    nb.grid = grid;
    nb.N = N;
    nb.chain = sample_chain(gen, grid, initial_state, stream_key(seed, "chain", rep));
    nb.dW.resize(static_cast<std::size_t>(N) * grid.steps);
    const double sdt = std::sqrt(grid.dt());
    for (int i = 0; i < N; ++i) {
        Rng rng = make_stream(seed, "brownian", rep, static_cast<std::uint64_t>(i));
        for (int k = 0; k < grid.steps; ++k)
            nb.dW[static_cast<std::size_t>(i) * grid.steps + k] = sdt * rng.next_normal();
    }
    return nb;
}

ParticleEnsemble simulate_forward(const CoefficientSet& coeffs, const ControlModel& control,
                                  const NoiseBundle& noise, double x0, int workers) {
    if (noise.N < 2) throw std::invalid_argument("simulate_forward: need at least 2 particles");
    const int N = noise.N;
    const int steps = noise.grid.steps;
    const double dt = noise.grid.dt();

    ParticleEnsemble ens;
    ens.grid = noise.grid;
    ens.N = N;
    ens.noise = noise;
    ens.X.assign(static_cast<std::size_t>(N) * (steps + 1), x0);
    ens.controls.assign(static_cast<std::size_t>(N) * steps, 0.0);
    ens.xhat.assign(steps + 1, x0);

    for (int k = 0; k < steps; ++k) {
        const double t = noise.grid.t(k);
        const int regime = noise.chain.regime_for_step(k);
        const double xh = ens.xhat[k];

        // per-step synchronization: particles advance independently, the
        // conditional mean is reduced afterwards
        auto partial = parallel_chunks<double>(N, workers, [&](int lo, int hi) {
            double sum = 0.0;
            for (int i = lo; i < hi; ++i) {
                double xi = ens.x(i, k);
                double vi = control.policy.eval(t, xi, xh, regime);
                double drift = coeffs.b(t, xi, xh, vi, regime);
                double diff = coeffs.sigma(t, xi, xh, vi, regime);
                double xn = xi + drift * dt + diff * ens.dw(i, k);
                ens.controls[static_cast<std::size_t>(i) * steps + k] = vi;
                ens.X[static_cast<std::size_t>(i) * (steps + 1) + k + 1] = xn;
                sum += xn;
            }
            return sum;
        });
        double total = 0.0;
        for (double s : partial) total += s;
        ens.xhat[k + 1] = total / N;
        if (!std::isfinite(ens.xhat[k + 1]))
            throw NumericalError("simulate_forward: non-finite state at step " +
                                     std::to_string(k + 1),
                                 k + 1);
    }
    return ens;
}

double conditional_mean(const ParticleEnsemble& ens, int k) {
    if (k < 0 || k > ens.grid.steps) throw std::invalid_argument("step index out of range");
    return ens.xhat[k];
}

double moment_probe(const ParticleEnsemble& ens, double beta) {
    if (beta < 2.0 || beta > 8.0) throw std::invalid_argument("beta must lie in [2, 8]");
    double acc = 0.0;
    for (int i = 0; i < ens.N; ++i) {
        double m = 0.0;
        for (int k = 0; k <= ens.grid.steps; ++k) m = std::max(m, std::abs(ens.x(i, k)));
        acc += std::pow(m, beta);
    }
    return acc / ens.N;
}

void write_ensemble_csv(const ParticleEnsemble& ens, std::ostream& os) {
    os << "t,xhat,std,min,max\n";
    for (int k = 0; k <= ens.grid.steps; ++k) {
        double mean = ens.xhat[k], ss = 0.0;
        double lo = ens.x(0, k), hi = lo;
        for (int i = 0; i < ens.N; ++i) {
            double xi = ens.x(i, k);
            ss += (xi - mean) * (xi - mean);
            lo = std::min(lo, xi);
            hi = std::max(hi, xi);
        }
        double sd = ens.N > 1 ? std::sqrt(ss / (ens.N - 1)) : 0.0;
        os << fmt_double(ens.grid.t(k)) << ',' << fmt_double(mean) << ',' << fmt_double(sd)
           << ',' << fmt_double(lo) << ',' << fmt_double(hi) << '\n';
    }
}

void write_paths_csv(const ParticleEnsemble& ens, std::ostream& os) {
    os << "particle,t,x\n";
    for (int i = 0; i < ens.N; ++i)
        for (int k = 0; k <= ens.grid.steps; ++k)
            os << i << ',' << fmt_double(ens.grid.t(k)) << ',' << fmt_double(ens.x(i, k)) << '\n';
}

} // namespace mfmp
