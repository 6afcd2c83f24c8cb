#ifndef MFMP_REGRESSION_HPP
#define MFMP_REGRESSION_HPP

#include <span>
#include <vector>

namespace mfmp {

// Feature maps for the backward regressions: per-regime intercepts,
// powers of X, powers of xhat and the X*xhat interaction. xhat and the
// regime are constant across particles at a fixed step; the centered ridge
// solve below absorbs the resulting collinearity.
struct BasisSpec {
    int x_degree = 3;
    int xhat_degree = 2;
    bool interaction = true;
    bool regime_intercepts = true;
    double ridge = 1e-8; // scaled by trace of the normal matrix

    int num_features(int num_regimes) const {
        return (regime_intercepts ? num_regimes : 1) + x_degree + xhat_degree +
               (interaction ? 1 : 0);
    }
};

// Centered ridge least squares for one time step, factorized once and
// reused for every regression target at that step. Targets are demeaned
// before the solve and the mean is added back, so constant targets are
// reproduced exactly (no ridge shrinkage on the intercept).
//
// Extra regressors carry auxiliary per-particle states (the variational
// processes) whose conditional expectations are not functions of X alone;
// each extra column e enters as {e, e*x, e*x^2}.
class StepRegression {
public:
    StepRegression(std::span<const double> xs, double xhat, int regime, int num_regimes,
                   const BasisSpec& spec, std::span<const double* const> extras = {},
                   int workers = 1);

    // fitted conditional-expectation values for all particles
    void fit(std::span<const double> target, std::span<double> fitted) const;
    double condition() const { return condition_; }
    int num_features() const { return K_; }

private:
    int N_ = 0, K_ = 0;
    int workers_ = 1;
    std::vector<double> feat_;  // N x K, centered
    std::vector<double> chol_;  // K x K lower Cholesky factor of (F'F + lambda I)
    double condition_ = 0.0;
};

// Solves (A)x = b in place given the lower Cholesky factor L (A = L L').
void cholesky_solve(const std::vector<double>& L, int n, std::vector<double>& b);

} // namespace mfmp

#endif
