#ifndef MFMP_BSDE_HPP
#define MFMP_BSDE_HPP

#include <functional>
#include <iosfwd>
#include <vector>

#include "mfmp/forward.hpp"
#include "mfmp/regression.hpp"

namespace mfmp {

// Grid solution of an m-dimensional BSDE on a particle ensemble. Y lives on
// the nodes, Z on the steps (Z_k multiplies dW over [t_k, t_{k+1})).
struct BackwardSolution {
    TimeGrid grid;
    int N = 0;
    int dim = 1;
    std::vector<double> Y;         // [(k*N + i)*dim + j]
    std::vector<double> Z;         // [(k*N + i)*dim + j], k < steps
    std::vector<double> condition; // per step regression condition estimate

    double y(int k, int i, int j = 0) const {
        return Y[(static_cast<std::size_t>(k) * N + i) * dim + j];
    }
    double z(int k, int i, int j = 0) const {
        return Z[(static_cast<std::size_t>(k) * N + i) * dim + j];
    }
    // cross-particle mean of Y at t=0 (features are constant there)
    double y0_mean(int j = 0) const;
    double y_mean(int k, int j = 0) const;
};

struct BsdeOptions {
    BasisSpec basis;
    int picard = 2;
    int workers = 1;
};

// driver(k, i, y, z, out): fills out[0..dim) with F(t_k, ., Y, Z) for
// particle i; y and z point at the current dim-vector iterate.
using BsdeDriver = std::function<void(int k, int i, const double* y, const double* z, double* out)>;
using BsdeTerminal = std::function<void(int i, double* out)>;
// called once per backward step before the driver is used at that step;
// lets callers prepare step-local coefficient buffers
using StepHook = std::function<void(int k)>;
// per-step auxiliary regressors (N-sized arrays), e.g. variational states
using ExtraFeatures = std::function<std::vector<const double*>(int k)>;

// Least-squares Monte Carlo backward recursion:
//   Z_k = fit( (Y_{k+1} - fit(Y_{k+1})) * dW_k / dt )
//   Y_k = fit( Y_{k+1} + F(t_k, Y_impl, Z_k) dt ),  Picard-iterated in Y_impl
BackwardSolution solve_bsde(const ParticleEnsemble& ens, int dim, const BsdeDriver& driver,
                            const BsdeTerminal& terminal, const BsdeOptions& opts,
                            const StepHook& on_step = {}, const ExtraFeatures& extra = {});

// J(v) = Y^v(0): forward simulation + BSDE with driver f and terminal Phi.
struct CostResult {
    ParticleEnsemble ensemble;
    BackwardSolution solution;
    double j = 0.0;
};

CostResult solve_cost(const CoefficientSet& coeffs, const ControlModel& control,
                      const NoiseBundle& noise, double x0, const BsdeOptions& opts);

struct CostConfig {
    TimeGrid grid;
    double x0 = 0.0;
    GeneratorMatrix gen;
    int initial_regime = 1;
    int particles = 1000;
    int chains = 1;
    std::uint64_t seed = 1;
};

// cross-particle / chain-scenario average of Y(0)
double evaluate_cost(const CoefficientSet& coeffs, const ControlModel& control,
                     const CostConfig& cfg, const BsdeOptions& opts);

// Empirical continuity probe of the backward solver: solve with (terminal,
// driver) and a perturbed pair on the same ensemble, report the ratio of
// solution-difference norm to data-difference norm (gamma = 2 norms).
struct StabilityReport {
    double diff_norm = 0.0; // E[sup|dY|^2 + int |dZ|^2 dt]
    double data_norm = 0.0; // E[|dxi|^2 + (int |dF| dt)^2]
    double implied_c = 0.0;
};

StabilityReport stability_probe(const ParticleEnsemble& ens, int dim, const BsdeDriver& driver_a,
                                const BsdeTerminal& terminal_a, const BsdeDriver& driver_b,
                                const BsdeTerminal& terminal_b, const BsdeOptions& opts,
                                const StepHook& on_step = {});

// columns t, meanY, stdY, meanZ, stdZ, condition (first component)
void write_bsde_csv(const BackwardSolution& sol, std::ostream& os);

} // namespace mfmp

#endif
