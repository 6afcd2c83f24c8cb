#include "mfmp/regression.hpp"

#include <cmath>
#include <stdexcept>

#include "mfmp/forward.hpp"
#include "mfmp/parallel.hpp"

namespace mfmp {

namespace {

// in-place lower Cholesky; returns false if a pivot is not positive
bool cholesky(std::vector<double>& a, int n) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (!(s > 0.0)) return false;
                a[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                a[static_cast<std::size_t>(i) * n + j] = s / a[static_cast<std::size_t>(j) * n + j];
            }
        }
        for (int j = i + 1; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] = 0.0;
    }
    return true;
}

// extreme eigenvalues of A = L L' by power iteration (A and A^{-1})
double condition_estimate(const std::vector<double>& A, const std::vector<double>& L, int n) {
    std::vector<double> v(static_cast<std::size_t>(n), 1.0), w(static_cast<std::size_t>(n));
    auto normalize = [&](std::vector<double>& u) {
        double s = 0.0;
        for (double x : u) s += x * x;
        s = std::sqrt(s);
        if (s == 0.0) return 0.0;
        for (double& x : u) x /= s;
        return s;
    };
    normalize(v);
    double lam_max = 0.0;
    for (int it = 0; it < 40; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += A[static_cast<std::size_t>(i) * n + j] * v[static_cast<std::size_t>(j)];
            w[static_cast<std::size_t>(i)] = s;
        }
        std::swap(v, w);
        lam_max = normalize(v);
        if (lam_max == 0.0) break;
    }
    std::vector<double> u(static_cast<std::size_t>(n), 1.0);
    normalize(u);
    double inv_lam_min = 0.0;
    for (int it = 0; it < 40; ++it) {
        std::vector<double> rhs = u;
        cholesky_solve(L, n, rhs);
        u = rhs;
        inv_lam_min = normalize(u);
        if (inv_lam_min == 0.0) break;
    }
    if (lam_max <= 0.0 || inv_lam_min <= 0.0) return 0.0;
    return lam_max * inv_lam_min;
}

} // namespace

void cholesky_solve(const std::vector<double>& L, int n, std::vector<double>& b) {
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= L[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = s / L[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) s -= L[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = s / L[static_cast<std::size_t>(i) * n + i];
    }
}

StepRegression::StepRegression(std::span<const double> xs, double xhat, int regime,
                               int num_regimes, const BasisSpec& spec,
                               std::span<const double* const> extras, int workers)
    : N_(static_cast<int>(xs.size())), workers_(workers) {
    const int base_k = spec.num_features(num_regimes);
    K_ = base_k + 3 * static_cast<int>(extras.size());
    feat_.assign(static_cast<std::size_t>(N_) * K_, 0.0);

    const int base = spec.regime_intercepts ? num_regimes : 1;
    for (int i = 0; i < N_; ++i) {
        double* row = feat_.data() + static_cast<std::size_t>(i) * K_;
        if (spec.regime_intercepts)
            row[regime - 1] = 1.0;
        else
            row[0] = 1.0;
        double x = xs[static_cast<std::size_t>(i)], p = 1.0;
        for (int d = 0; d < spec.x_degree; ++d) {
            p *= x;
            row[base + d] = p;
        }
        double q = 1.0;
        for (int d = 0; d < spec.xhat_degree; ++d) {
            q *= xhat;
            row[base + spec.x_degree + d] = q;
        }
        if (spec.interaction) row[base + spec.x_degree + spec.xhat_degree] = x * xhat;
        for (std::size_t m = 0; m < extras.size(); ++m) {
            double e = extras[m][i];
            row[base_k + 3 * m] = e;
            row[base_k + 3 * m + 1] = e * x;
            row[base_k + 3 * m + 2] = e * x * x;
        }
    }

    // center the columns; the intercept is restored through the target mean
    std::vector<double> mean(static_cast<std::size_t>(K_), 0.0);
    for (int i = 0; i < N_; ++i)
        for (int j = 0; j < K_; ++j) mean[static_cast<std::size_t>(j)] += feat_[static_cast<std::size_t>(i) * K_ + j];
    for (double& m : mean) m /= N_;
    for (int i = 0; i < N_; ++i)
        for (int j = 0; j < K_; ++j) feat_[static_cast<std::size_t>(i) * K_ + j] -= mean[static_cast<std::size_t>(j)];

    // normal matrix, accumulated over fixed chunks for determinism
    auto partials = parallel_chunks<std::vector<double>>(N_, workers_, [&](int lo, int hi) {
        std::vector<double> a(static_cast<std::size_t>(K_) * K_, 0.0);
        for (int i = lo; i < hi; ++i) {
            const double* row = feat_.data() + static_cast<std::size_t>(i) * K_;
            for (int r = 0; r < K_; ++r)
                for (int c = 0; c <= r; ++c) a[static_cast<std::size_t>(r) * K_ + c] += row[r] * row[c];
        }
        return a;
    });
    std::vector<double> A(static_cast<std::size_t>(K_) * K_, 0.0);
    for (const auto& a : partials)
        for (std::size_t j = 0; j < A.size(); ++j) A[j] += a[j];
    for (int r = 0; r < K_; ++r)
        for (int c = r + 1; c < K_; ++c) A[static_cast<std::size_t>(r) * K_ + c] = A[static_cast<std::size_t>(c) * K_ + r];

    double trace = 0.0;
    for (int j = 0; j < K_; ++j) trace += A[static_cast<std::size_t>(j) * K_ + j];
    // fully degenerate step (all features constant): the fit reduces to the
    // target mean and any ridge gives identical predictions
    const bool degenerate = !(trace > 1e-200);
    double lambda = degenerate ? 1.0 : spec.ridge * trace / K_;
    for (int attempt = 0;; ++attempt) {
        chol_ = A;
        for (int j = 0; j < K_; ++j) chol_[static_cast<std::size_t>(j) * K_ + j] += lambda;
        std::vector<double> ridged = chol_;
        if (cholesky(chol_, K_)) {
            condition_ = degenerate ? 1.0 : condition_estimate(ridged, chol_, K_);
            break;
        }
        if (attempt >= 2)
            throw NumericalError("regression: rank-deficient design beyond ridge rescue", -1);
        lambda = std::max(lambda * 1e4, 1e-12);
    }
}

void StepRegression::fit(std::span<const double> target, std::span<double> fitted) const {
    double ybar = 0.0;
    for (int i = 0; i < N_; ++i) ybar += target[static_cast<std::size_t>(i)];
    ybar /= N_;

    std::vector<double> rhs(static_cast<std::size_t>(K_), 0.0);
    for (int i = 0; i < N_; ++i) {
        const double* row = feat_.data() + static_cast<std::size_t>(i) * K_;
        double yc = target[static_cast<std::size_t>(i)] - ybar;
        for (int j = 0; j < K_; ++j) rhs[static_cast<std::size_t>(j)] += row[j] * yc;
    }
    cholesky_solve(chol_, K_, rhs);
    for (int i = 0; i < N_; ++i) {
        const double* row = feat_.data() + static_cast<std::size_t>(i) * K_;
        double s = ybar;
        for (int j = 0; j < K_; ++j) s += row[j] * rhs[static_cast<std::size_t>(j)];
        fitted[static_cast<std::size_t>(i)] = s;
    }
}

} // namespace mfmp
