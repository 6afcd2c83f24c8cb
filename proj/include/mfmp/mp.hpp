#ifndef MFMP_MP_HPP
#define MFMP_MP_HPP

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfmp/adjoint.hpp"
#include "mfmp/variation.hpp"

namespace mfmp {

// One evaluation point of the Hamiltonian: trajectory values at a step for
// one particle, the adjoint values there, and a candidate control value.
struct HamiltonianContext {
    double t = 0.0;
    double x = 0.0, xhat = 0.0, y = 0.0, z = 0.0;
    double vbar = 0.0; // base control at this point (for the z-shift)
    int regime = 1;
    double p0 = 0.0, p1 = 0.0, q0 = 0.0;
    double v = 0.0;      // candidate
    double b_hat = 0.0;  // cross-particle mean of b(., v, .) at this step
};

double hamiltonian(const CoefficientSet& coeffs, const HamiltonianContext& ctx);

// H plus the second-order quadratic terms; s2_hat is the cross-particle
// mean of (delta sigma)^2 at this (step, candidate).
double h_function(const CoefficientSet& coeffs, const HamiltonianContext& ctx, double P0,
                  double P1, double s2_hat);

struct MpReport {
    std::string candidate;
    double violation_fraction = 0.0;
    double worst_violation = 0.0; // most negative Delta encountered
    double tol_scale = 3.0;       // local standard errors
    double quantile = 0.01;
    long points = 0;
    long violations = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};

// Pointwise check of Delta(t, omega, v) = Hfun(v) - Hfun(vbar) >= -tol over
// the (step, particle, candidate) grid; tol is 3 local standard errors of
// the cross-particle mean.
MpReport check_mp(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                  const BackwardSolution& cost, const FirstOrderAdjoint& first,
                  const SecondOrderAdjoint& second, const std::vector<double>& control_grid,
                  double quantile = 0.01, int workers = 1);

// The linear-quadratic pointwise form: [p0(A3 + C4 B3) + B3 q0 + C5](v-vbar)
// + p1 A3 E[v-vbar | chain] + 1/2 P0 B3^2 (v-vbar)^2 >= 0.
MpReport check_mp_lq(const LQCoefficients& lq, const ParticleEnsemble& ens,
                     const FirstOrderAdjoint& first, const SecondOrderAdjoint& second,
                     const std::vector<double>& control_grid, double quantile = 0.01);

struct BruteForceResult {
    std::vector<double> best_blocks;
    double best_cost = 0.0;
    bool exhaustive = true;
    bool budget_exceeded = false;
    // cost table rows: block values then J
    std::vector<std::pair<std::vector<double>, double>> table;
};

struct BruteForceConfig {
    int blocks = 2;
    long budget = 100000; // switch to coordinate descent above this
    int max_sweeps = 12;
};

// Exhaustive (or coordinate-descent) minimization of J over piecewise
// constant controls on a block mesh, under common random numbers.
BruteForceResult lq_brute_force(const CoefficientSet& coeffs, const ControlSet& set,
                                const NoiseBundle& noise, double x0, const BsdeOptions& opts,
                                const BruteForceConfig& cfg);

void write_cost_table_csv(const BruteForceResult& r, std::ostream& os);

// ---- state-constrained verification -------------------------------------

// Constraint Psi(x, x', y) with derivative oracles.
struct ConstraintFn {
    std::function<double(double x, double xp, double y)> psi;
    std::function<double(double, double, double)> psi_x, psi_xp, psi_y;
    std::function<double(double, double, double)> psi_xx;
};

struct ConstrainedConfig {
    std::vector<double> kappa_ladder{0.2, 0.1, 0.05, 0.025};
    double multiplier_tol = 1e-2;  // ladder convergence threshold
    double feasibility_tol = 0.05; // |E Psi| at the candidate
    int search_blocks = 1;         // penalized minimization over block controls
    double quantile = 0.01;
};

struct ConstrainedReport {
    struct KappaRow {
        double kappa = 0.0;
        double lambda = 0.0, mu = 0.0;
        double j = 0.0, psi = 0.0;
        std::vector<double> blocks;
    };
    std::vector<KappaRow> ladder;
    double lambda = 0.0, mu = 0.0; // selected multipliers
    double norm_error = 0.0;       // | lambda^2 + mu^2 - 1 |
    bool multipliers_converged = false;
    bool candidate_feasible = false;
    double candidate_psi = 0.0;
    MpReport inequality;
    nlohmann::json to_json() const;
};

// Penalized minimization in place of the Ekeland construction: for each
// kappa, minimize J_kappa over block controls (CRN), extract (lambda_kappa,
// mu_kappa), then verify the constrained Hamiltonian inequality with the
// tilde adjoints and the Upsilon exponential at the converged kappa.
ConstrainedReport constrained_verify(const CoefficientSet& coeffs, const ConstraintFn& psi,
                                     const ControlModel& candidate, const GeneratorMatrix& gen,
                                     const TimeGrid& grid, int initial_regime, double x0,
                                     int particles, std::uint64_t seed, const BsdeOptions& opts,
                                     const ConstrainedConfig& cfg);

} // namespace mfmp

#endif
