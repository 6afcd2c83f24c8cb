#ifndef MFMP_COEFFICIENTS_HPP
#define MFMP_COEFFICIENTS_HPP

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

namespace mfmp {

using DriftFn = std::function<double(double t, double x, double xp, double v, int regime)>;
using DriverFnF = std::function<double(double t, double x, double xp, double y, double z,
                                       double v, int regime)>;
using TerminalFnPhi = std::function<double(double x, double xp, int regime)>;
// 4x4 Hessian of f in (x, x', y, z), row-major
using HessFnF = std::function<std::array<double, 16>(double t, double x, double xp, double y,
                                                     double z, double v, int regime)>;

// Problem data (b, sigma, f, Phi) with first/second derivative oracles per
// regime. x' denotes the conditional-mean argument. All callables must be
// pure: they are evaluated concurrently across particles.
struct CoefficientSet {
    int num_regimes = 1;
    double lipschitz_bound = 1.0;
    bool field_adapted = false; // b_x, sigma_x, b_xx depend on (t, regime) only

    DriftFn b, sigma;
    DriftFn b_x, b_xp, sigma_x, sigma_xp;
    DriftFn b_xx, b_xxp, b_xpxp, sigma_xx, sigma_xxp, sigma_xpxp;

    DriverFnF f;
    DriverFnF f_x, f_xp, f_y, f_z;
    HessFnF f_hess;

    TerminalFnPhi phi;
    TerminalFnPhi phi_x, phi_xp;
    TerminalFnPhi phi_xx, phi_xxp, phi_xpxp;
};

// Per-regime linear-quadratic data:
//   b   = A0 + A1 x + A2 x' + A3 v
//   sig = B0 + B1 x + B2 x' + B3 v
//   f   = C0 + C1 x + C2 x' + C3 y + C4 z + C5 v
//   Phi = D1 x^2 + D2 x'^2
// The constant offsets default to zero.
struct LQRegime {
    double A0 = 0, A1 = 0, A2 = 0, A3 = 0;
    double B0 = 0, B1 = 0, B2 = 0, B3 = 0;
    double C0 = 0, C1 = 0, C2 = 0, C3 = 0, C4 = 0, C5 = 0;
    double D1 = 0, D2 = 0;
};

struct LQCoefficients {
    std::vector<LQRegime> regimes;

    const LQRegime& at(int regime) const {
        if (regime < 1 || regime > static_cast<int>(regimes.size()))
            throw std::invalid_argument("LQ regime index out of range");
        return regimes[regime - 1];
    }
    int num_regimes() const { return static_cast<int>(regimes.size()); }
};

CoefficientSet lq_to_general(const LQCoefficients& lq);

// Bounded-derivative nonlinear family, per regime:
//   b   = a0 + a1 tanh(x) + a2 tanh(x') + a3 v
//   sig = s0 + s1 tanh(x) + s2 tanh(x') + s3 v
//   f   = c0 + c1 tanh(x) + c2 tanh(x') + c3 sin(y) + c4 sin(z) + c5 v + c6 sin(y) tanh(x)
//   Phi = d1 x^2 + d2 x'^2
struct TanhRegime {
    double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    double c0 = 0, c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0, c6 = 0;
    double d1 = 0, d2 = 0;
};

CoefficientSet tanh_family(const std::vector<TanhRegime>& regimes);

} // namespace mfmp

#endif
