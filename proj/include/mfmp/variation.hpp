#ifndef MFMP_VARIATION_HPP
#define MFMP_VARIATION_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfmp/adjoint.hpp"

namespace mfmp {

// First/second-order variational forward processes; per-particle paths plus
// the cross-particle mean path. Step-major layout so one step's values form
// a contiguous block (they double as regression features).
struct VariationProcess {
    int N = 0, steps = 0;
    std::vector<double> X;    // [k*N + i]
    std::vector<double> hat;  // steps+1
    double x(int i, int k) const { return X[static_cast<std::size_t>(k) * N + i]; }
    const double* step(int k) const { return X.data() + static_cast<std::size_t>(k) * N; }
};

VariationProcess solve_first_variation(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                       const PolicyFn& alt, const std::vector<char>& mask);

// deterministic filtered equation for xhat1 (cross-check of the mean path)
std::vector<double> filtered_first_variation(const CoefficientSet& coeffs,
                                             const ParticleEnsemble& ens, const PolicyFn& alt,
                                             const std::vector<char>& mask);

VariationProcess solve_second_variation(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                        const PolicyFn& alt, const std::vector<char>& mask,
                                        const VariationProcess& first);

// Variational BSDEs driven by the displayed first/second-order expansions.
BackwardSolution solve_first_variational_bsde(const CoefficientSet& coeffs,
                                              const ParticleEnsemble& ens,
                                              const BackwardSolution& cost,
                                              const FirstOrderAdjoint& adj, const PolicyFn& alt,
                                              const std::vector<char>& mask,
                                              const VariationProcess& x1, const BsdeOptions& opts,
                                              const ExtraFeatures& extra = {});

BackwardSolution solve_second_variational_bsde(const CoefficientSet& coeffs,
                                               const ParticleEnsemble& ens,
                                               const BackwardSolution& cost,
                                               const FirstOrderAdjoint& adj, const PolicyFn& alt,
                                               const std::vector<char>& mask,
                                               const VariationProcess& x1,
                                               const VariationProcess& x2,
                                               const BsdeOptions& opts,
                                               const ExtraFeatures& extra = {});

// Everything one spike experiment produces under common random numbers.
struct VariationalBundle {
    CostResult base;  // barX, (barY, barZ)
    CostResult pert;  // X^eps, (Y^eps, Z^eps)
    FirstOrderAdjoint first;
    SecondOrderAdjoint second;
    VariationProcess x1, x2;
    BackwardSolution y1, y2;
    BackwardSolution aux;      // (Ytilde, Ztilde)
    std::vector<double> gamma; // [i*(steps+1)+k]
    std::vector<char> mask;
    double epsilon = 0.0;
};

struct PipelineConfig {
    TimeGrid grid;
    GeneratorMatrix gen;
    int initial_regime = 1;
    double x0 = 0.0;
    int particles = 1000;
    std::uint64_t seed = 1;
    AdjointOptions adjoint;
};

// Runs forward (base), cost BSDE and adjoints once; then per spike window the
// perturbed system and all variational processes, reusing the same noise.
class VariationPipeline {
public:
    VariationPipeline(const CoefficientSet& coeffs, ControlModel base, ControlModel alt,
                      PipelineConfig cfg);

    // base-side solves for one rep (cached)
    void prepare_rep(int rep);
    VariationalBundle run_spike(const SpikeSpec& spike);

    const CostResult& base() const { return *base_; }
    const FirstOrderAdjoint& first() const { return *first_; }
    const SecondOrderAdjoint& second() const { return *second_; }
    const NoiseBundle& noise() const { return *noise_; }
    const PipelineConfig& config() const { return cfg_; }
    const CoefficientSet& coeffs() const { return coeffs_; }
    const ControlModel& base_control() const { return base_ctrl_; }
    const ControlModel& alt_control() const { return alt_ctrl_; }

private:
    const CoefficientSet& coeffs_;
    ControlModel base_ctrl_, alt_ctrl_;
    PipelineConfig cfg_;
    int rep_ = -1;
    std::optional<NoiseBundle> noise_;
    std::optional<CostResult> base_;
    std::optional<FirstOrderAdjoint> first_;
    std::optional<SecondOrderAdjoint> second_;
};

struct IdentityResidual {
    std::string name;
    double rel_rms = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Relative RMS residuals of the structural identities: the first-order
// (Y, Z) relations, the second-order relations including the P-terms and
// Ytilde, and the full expansion of Y^eps - barY. Z-relations are
// diagnostics (regression estimates on both sides) with widened bands.
std::vector<IdentityResidual> check_identities(const CoefficientSet& coeffs,
                                               const VariationalBundle& b, const PolicyFn& alt,
                                               double tol_first, double tol_second,
                                               double tol_expansion);

struct RatePoint {
    double eps = 0.0;
    double metric = 0.0;
    double std_error = 0.0; // across reps
};

struct RateFit {
    std::string quantity;
    double beta = 2.0;
    double slope = 0.0;
    double slope_stderr = 0.0;
    double band_lo = 0.0, band_hi = 0.0; // band_hi = +inf for one-sided
    bool one_sided = false;
    bool gate = false;   // counted in the acceptance verdict
    bool zero = false;   // metric identically zero: the bound holds trivially
    std::string verdict; // pass | fail | indeterminate
    std::vector<RatePoint> points;
};

struct RateStudy {
    std::vector<RateFit> fits;
    std::vector<IdentityResidual> identities;    // at the reference epsilon
    std::vector<RatePoint> expansion;            // R(eps) ladder
    std::vector<RatePoint> expansion_residual;   // identity (c) rel RMS per eps
    bool expansion_pass = false;
    bool expansion_residual_decreasing = false;
    bool all_gates_pass() const;
};

// Full ladder study: metrics for every rate target, slope fits
// with the noise-floor drop rule, identity residuals at eps_ref, and the
// cost-expansion remainder R(eps). beta is the moment of the sup-norm
// targets (default 2; higher moments need larger ensembles).
RateStudy rate_probe(VariationPipeline& pipe, const SpikeSpec& spike, double spike_t0,
                     int reps, double eps_ref, double beta = 2.0);

void write_rate_csv(const RateStudy& s, std::ostream& os);
void write_identity_csv(const std::vector<IdentityResidual>& ids, std::ostream& os);

} // namespace mfmp

#endif
