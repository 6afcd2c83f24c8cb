#ifndef MFMP_FORWARD_HPP
#define MFMP_FORWARD_HPP

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfmp/chain.hpp"
#include "mfmp/coefficients.hpp"
#include "mfmp/control.hpp"
#include "mfmp/grid.hpp"

namespace mfmp {

// Raised when a simulation or solver leaves the finite range; carries the
// step index for diagnostics (CLI maps it to exit code 3).
struct NumericalError : std::runtime_error {
    int step;
    NumericalError(const std::string& what, int step_) : std::runtime_error(what), step(step_) {}
};

// One chain path plus N Brownian increment streams. Reusing a bundle across
// control variants is what implements common random numbers.
struct NoiseBundle {
    TimeGrid grid;
    int N = 0;
    ChainPath chain;
    std::vector<double> dW; // [i*steps + k], variance dt

    double dw(int i, int k) const { return dW[static_cast<std::size_t>(i) * grid.steps + k]; }
};

NoiseBundle make_noise(const GeneratorMatrix& gen, const TimeGrid& grid, int initial_state,
                       int N, std::uint64_t seed, std::uint64_t rep = 0);

// N coupled particles sharing one chain path; xhat is the cross-particle
// mean, the surrogate for the conditional expectation given the chain.
struct ParticleEnsemble {
    TimeGrid grid;
    int N = 0;
    NoiseBundle noise;            // includes the shared chain
    std::vector<double> X;        // [i*(steps+1) + k]
    std::vector<double> controls; // [i*steps + k]
    std::vector<double> xhat;     // steps+1

    double x(int i, int k) const { return X[static_cast<std::size_t>(i) * (grid.steps + 1) + k]; }
    double v(int i, int k) const { return controls[static_cast<std::size_t>(i) * grid.steps + k]; }
    double dw(int i, int k) const { return noise.dw(i, k); }
    int regime(int k) const { return noise.chain.regime_for_step(k); }
    int terminal_regime() const { return noise.chain.terminal_state(); }
};

ParticleEnsemble simulate_forward(const CoefficientSet& coeffs, const ControlModel& control,
                                  const NoiseBundle& noise, double x0, int workers = 1);

double conditional_mean(const ParticleEnsemble& ens, int k);

// empirical E[ sup_k |X_k|^beta ], beta in [2, 8]
double moment_probe(const ParticleEnsemble& ens, double beta);

// columns t, xhat, std, min, max
void write_ensemble_csv(const ParticleEnsemble& ens, std::ostream& os);
// full path dump, one row per (particle, step)
void write_paths_csv(const ParticleEnsemble& ens, std::ostream& os);

} // namespace mfmp

#endif
