#ifndef MFMP_SCENARIO_HPP
#define MFMP_SCENARIO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfmp/bsde.hpp"
#include "mfmp/chain.hpp"
#include "mfmp/coefficients.hpp"
#include "mfmp/control.hpp"
#include "mfmp/mp.hpp"

namespace mfmp {

// Raised on malformed configuration; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RateConfig {
    int reps = 2;
    double eps_ref = 0.05;
    double beta = 2.0; // moment of the sup-norm rate targets
};

struct ValidationBox {
    double x_lo = -3.0, x_hi = 3.0;
    double y_lo = -2.0, y_hi = 2.0;
    double z_lo = -2.0, z_hi = 2.0;
    int budget = 2000;
};

struct Scenario {
    TimeGrid grid;
    double x0 = 0.0;
    GeneratorMatrix gen;
    int initial_regime = 1;
    int particles = 1000;
    int chains = 1;
    std::uint64_t seed = 1;

    CoefficientSet coeffs;
    bool is_lq = false;
    LQCoefficients lq;

    ControlModel base;
    ControlModel alt;
    SpikeSpec spike;
    double spike_t0 = 0.0;

    BsdeOptions bsde;
    bool clip_q = false; // clip |q0| entering the f-Hessian row (diagnostic)
    double mp_quantile = 0.01;
    BruteForceConfig brute;
    RateConfig rate;
    ValidationBox box;

    std::optional<ConstraintFn> constraint;
    ConstrainedConfig constrained;

    nlohmann::json raw; // resolved config, canonical form for the manifest

    CostConfig cost_config() const {
        return CostConfig{grid, x0, gen, initial_regime, particles, chains, seed};
    }
};

Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

// ---- standing-assumption validation --------------------------------------

struct AssumptionCheck {
    std::string name;
    bool pass = false;
    double worst = 0.0; // worst sampled violation ratio (<= 1 passes)
    std::string witness;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    bool all_pass() const;
    nlohmann::json to_json() const;
};

// Sampling-based verification of the standing assumptions: derivative
// oracles against central finite differences, Lipschitz/growth ratios
// against L, second-derivative bounds, and the field-adapted property.
// A pass is evidence on the sampled box, not a proof.
AssumptionReport check_assumptions(const CoefficientSet& coeffs, const ValidationBox& box,
                                   int budget, std::uint64_t seed);

// control-set containment of policy evaluations over the sampling box
AssumptionCheck check_policy(const ControlModel& model, const ValidationBox& box, int budget,
                             std::uint64_t seed, int num_regimes);

} // namespace mfmp

#endif
