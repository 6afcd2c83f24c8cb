#ifndef MFMP_ADJOINT_HPP
#define MFMP_ADJOINT_HPP

#include <vector>

#include "mfmp/bsde.hpp"

namespace mfmp {

// (p0, p1) with martingale integrands (q0, q1); terminal (Phi_x, Phi_x').
struct FirstOrderAdjoint {
    BackwardSolution sol; // dim 2
    double p0(int k, int i) const { return sol.y(k, i, 0); }
    double p1(int k, int i) const { return sol.y(k, i, 1); }
    double q0(int k, int i) const { return sol.z(k, i, 0); }
    double q1(int k, int i) const { return sol.z(k, i, 1); }
};

// (P0, P1) with (Q0, Q1); terminal (Phi_xx, 0).
struct SecondOrderAdjoint {
    BackwardSolution sol; // dim 2
    double P0(int k, int i) const { return sol.y(k, i, 0); }
    double P1(int k, int i) const { return sol.y(k, i, 1); }
    double Q0(int k, int i) const { return sol.z(k, i, 0); }
    double Q1(int k, int i) const { return sol.z(k, i, 1); }
};

// Auxiliary expansion BSDE (Ytilde, Ztilde) and the stochastic exponential
// Gamma driven by (f_y, f_z) along the base trajectory.
struct ExpansionProcesses {
    BackwardSolution aux;      // dim 1, may be empty if only gamma was built
    std::vector<double> gamma; // [i*(steps+1)+k]
    int N = 0, steps = 0;
    double gamma_at(int i, int k) const {
        return gamma[static_cast<std::size_t>(i) * (steps + 1) + k];
    }
};

struct AdjointOptions {
    BsdeOptions bsde;
    bool clip_q = false;          // clip |q0| entering the f-Hessian row
    double clip_quantile = 0.999; // per-step quantile when clipping
};

// Per-step evaluation of coefficient derivatives and spike differences
// along a base trajectory (X, xhat, Y, Z, v). prepare(k) fills the arrays
// for step k; the BSDE step hook drives it during backward solves.
class TrajectoryEval {
public:
    TrajectoryEval(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                   const BackwardSolution* cost);

    void set_alt(const PolicyFn* alt, const std::vector<char>* mask);
    void set_first_order(const FirstOrderAdjoint* adj) { first_ = adj; }
    void set_second_order(const SecondOrderAdjoint* adj) { second_ = adj; }
    void set_clip(bool on, double quantile) {
        clip_q_ = on;
        clip_quantile_ = quantile;
    }

    void prepare(int k);
    int current_step() const { return cur_; }

    // all size N, valid after prepare(k)
    std::vector<double> bx, bxp, sx, sxp, bxx, sxx;
    std::vector<double> fx, fxp, fy, fz;
    std::vector<double> hess_quad; // [1,p0,p0*sx+q0] D2_xyz f [.]^T, needs first order
    std::vector<double> dB, dS;   // delta b, delta sigma at the alt control
    std::vector<double> dBx, dSx; // delta b_x, delta sigma_x
    std::vector<double> df_shift; // delta f(t, v, p0*delta sigma), needs first order
    std::vector<double> alt_v;
    double bxp_hat = 0.0, dB_hat = 0.0, dS2_hat = 0.0;
    bool spike_step = false;

    const ParticleEnsemble& ensemble() const { return ens_; }
    const CoefficientSet& coefficients() const { return coeffs_; }
    double ybar(int k, int i) const { return cost_ ? cost_->y(k, i, 0) : 0.0; }
    double zbar(int k, int i) const {
        return (cost_ && k < ens_.grid.steps) ? cost_->z(k, i, 0) : 0.0;
    }

private:
    const CoefficientSet& coeffs_;
    const ParticleEnsemble& ens_;
    const BackwardSolution* cost_;
    const FirstOrderAdjoint* first_ = nullptr;
    const SecondOrderAdjoint* second_ = nullptr;
    const PolicyFn* alt_ = nullptr;
    const std::vector<char>* mask_ = nullptr;
    bool clip_q_ = false;
    double clip_quantile_ = 0.999;
    int cur_ = -1;
};

FirstOrderAdjoint solve_first_order_adjoint(const CoefficientSet& coeffs,
                                            const ParticleEnsemble& ens,
                                            const BackwardSolution& cost,
                                            const AdjointOptions& opts);

SecondOrderAdjoint solve_second_order_adjoint(const CoefficientSet& coeffs,
                                              const ParticleEnsemble& ens,
                                              const BackwardSolution& cost,
                                              const FirstOrderAdjoint& first,
                                              const AdjointOptions& opts);

// Ytilde/Ztilde of the auxiliary expansion BSDE for a given spike window.
BackwardSolution solve_auxiliary(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                 const BackwardSolution& cost, const FirstOrderAdjoint& first,
                                 const SecondOrderAdjoint& second, const PolicyFn& alt,
                                 const std::vector<char>& mask, const AdjointOptions& opts,
                                 const ExtraFeatures& extra = {});

// Gamma by the exact exponential step; positive by construction.
std::vector<double> solve_gamma(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                const BackwardSolution& cost);

// E[ int Gamma 1_E (spike integrand) dt ] and its Monte Carlo standard
// error; the pathwise counterpart of Ytilde(0).
struct GammaRepresentation {
    double value = 0.0;
    double std_error = 0.0;
};

GammaRepresentation gamma_representation(const CoefficientSet& coeffs,
                                         const ParticleEnsemble& ens,
                                         const BackwardSolution& cost,
                                         const FirstOrderAdjoint& first,
                                         const SecondOrderAdjoint& second, const PolicyFn& alt,
                                         const std::vector<char>& mask,
                                         const std::vector<double>& gamma,
                                         const AdjointOptions& opts);

} // namespace mfmp

#endif
