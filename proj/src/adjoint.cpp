#include "mfmp/adjoint.hpp"

#include <algorithm>
#include <cmath>

namespace mfmp {

TrajectoryEval::TrajectoryEval(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                               const BackwardSolution* cost)
    : coeffs_(coeffs), ens_(ens), cost_(cost) {
    const std::size_t n = static_cast<std::size_t>(ens.N);
    bx.resize(n);
    bxp.resize(n);
    sx.resize(n);
    sxp.resize(n);
    bxx.resize(n);
    sxx.resize(n);
    fx.resize(n);
    fxp.resize(n);
    fy.resize(n);
    fz.resize(n);
    hess_quad.assign(n, 0.0);
    dB.assign(n, 0.0);
    dS.assign(n, 0.0);
    dBx.assign(n, 0.0);
    dSx.assign(n, 0.0);
    df_shift.assign(n, 0.0);
    alt_v.assign(n, 0.0);
}

void TrajectoryEval::set_alt(const PolicyFn* alt, const std::vector<char>* mask) {
    alt_ = alt;
    mask_ = mask;
}

void TrajectoryEval::prepare(int k) {
    if (k == cur_) return;
    cur_ = k;
    const int N = ens_.N;
    const double t = ens_.grid.t(k);
    const double xh = ens_.xhat[k];
    const int rg = ens_.regime(k);

    double bxp_sum = 0.0;
    for (int i = 0; i < N; ++i) {
        const double xi = ens_.x(i, k);
        const double vi = ens_.v(i, k);
        bx[i] = coeffs_.b_x(t, xi, xh, vi, rg);
        bxp[i] = coeffs_.b_xp(t, xi, xh, vi, rg);
        sx[i] = coeffs_.sigma_x(t, xi, xh, vi, rg);
        sxp[i] = coeffs_.sigma_xp(t, xi, xh, vi, rg);
        bxx[i] = coeffs_.b_xx(t, xi, xh, vi, rg);
        sxx[i] = coeffs_.sigma_xx(t, xi, xh, vi, rg);
        bxp_sum += bxp[i];

        const double yi = ybar(k, i);
        const double zi = zbar(k, i);
        fx[i] = coeffs_.f_x(t, xi, xh, yi, zi, vi, rg);
        fxp[i] = coeffs_.f_xp(t, xi, xh, yi, zi, vi, rg);
        fy[i] = coeffs_.f_y(t, xi, xh, yi, zi, vi, rg);
        fz[i] = coeffs_.f_z(t, xi, xh, yi, zi, vi, rg);
    }
    bxp_hat = bxp_sum / N;

    spike_step = mask_ && (*mask_)[static_cast<std::size_t>(k)];
    if (alt_) {
        double db_sum = 0.0, ds2_sum = 0.0;
        for (int i = 0; i < N; ++i) {
            const double xi = ens_.x(i, k);
            const double vb = ens_.v(i, k);
            const double va = (*alt_)(t, xi, xh, rg);
            alt_v[i] = va;
            dB[i] = coeffs_.b(t, xi, xh, va, rg) - coeffs_.b(t, xi, xh, vb, rg);
            dS[i] = coeffs_.sigma(t, xi, xh, va, rg) - coeffs_.sigma(t, xi, xh, vb, rg);
            dBx[i] = coeffs_.b_x(t, xi, xh, va, rg) - bx[i];
            dSx[i] = coeffs_.sigma_x(t, xi, xh, va, rg) - sx[i];
            db_sum += dB[i];
            ds2_sum += dS[i] * dS[i];
        }
        dB_hat = db_sum / N;
        dS2_hat = ds2_sum / N;
    }

    if (first_) {
        // optional clipping of the raw q0 regression estimate where it
        // enters the f-Hessian row
        double clip = 0.0;
        if (clip_q_ && k < ens_.grid.steps) {
            std::vector<double> mags(static_cast<std::size_t>(N));
            for (int i = 0; i < N; ++i) mags[static_cast<std::size_t>(i)] = std::abs(first_->q0(k, i));
            std::size_t pos = static_cast<std::size_t>(clip_quantile_ * (N - 1));
            std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(pos), mags.end());
            clip = mags[pos];
        }
        for (int i = 0; i < N; ++i) {
            const double xi = ens_.x(i, k);
            const double vi = ens_.v(i, k);
            const double yi = ybar(k, i);
            const double zi = zbar(k, i);
            const double p0 = first_->p0(k, i);
            double q0 = k < ens_.grid.steps ? first_->q0(k, i) : 0.0;
            if (clip_q_ && clip > 0.0) q0 = std::clamp(q0, -clip, clip);
            auto h = coeffs_.f_hess(t, xi, xh, yi, zi, vi, rg);
            // row over (x, y, z): indices 0, 2, 3 of the 4x4 (x, x', y, z)
            const double r[3] = {1.0, p0, p0 * sx[i] + q0};
            const int idx[3] = {0, 2, 3};
            double acc = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) acc += r[a] * h[static_cast<std::size_t>(idx[a] * 4 + idx[b])] * r[b];
            hess_quad[i] = acc;

            if (alt_ && spike_step) {
                df_shift[i] = coeffs_.f(t, xi, xh, yi, zi + p0 * dS[i], alt_v[i], rg) -
                              coeffs_.f(t, xi, xh, yi, zi, vi, rg);
            } else {
                df_shift[i] = 0.0;
            }
        }
    }
}

FirstOrderAdjoint solve_first_order_adjoint(const CoefficientSet& coeffs,
                                            const ParticleEnsemble& ens,
                                            const BackwardSolution& cost,
                                            const AdjointOptions& opts) {
    TrajectoryEval te(coeffs, ens, &cost);
    auto driver = [&te](int k, int i, const double* y, const double* z, double* o) {
        te.prepare(k);
        o[0] = (te.bx[i] + te.fy[i] + te.fz[i] * te.sx[i]) * y[0] +
               (te.sx[i] + te.fz[i]) * z[0] + te.fx[i];
        o[1] = (te.bxp[i] + te.fz[i] * te.sxp[i]) * y[0] +
               (te.bx[i] + te.bxp_hat + te.fy[i]) * y[1] + te.sxp[i] * z[0] +
               te.fz[i] * z[1] + te.fxp[i];
    };
    const int steps = ens.grid.steps;
    auto terminal = [&coeffs, &ens, steps](int i, double* o) {
        const double xT = ens.x(i, steps), xh = ens.xhat[steps];
        const int rT = ens.terminal_regime();
        o[0] = coeffs.phi_x(xT, xh, rT);
        o[1] = coeffs.phi_xp(xT, xh, rT);
    };
    FirstOrderAdjoint out;
    out.sol = solve_bsde(ens, 2, driver, terminal, opts.bsde, [&te](int k) { te.prepare(k); });
    return out;
}

SecondOrderAdjoint solve_second_order_adjoint(const CoefficientSet& coeffs,
                                              const ParticleEnsemble& ens,
                                              const BackwardSolution& cost,
                                              const FirstOrderAdjoint& first,
                                              const AdjointOptions& opts) {
    TrajectoryEval te(coeffs, ens, &cost);
    te.set_first_order(&first);
    te.set_clip(opts.clip_q, opts.clip_quantile);
    auto driver = [&te, &first](int k, int i, const double* y, const double* z, double* o) {
        te.prepare(k);
        const double p0 = first.p0(k, i), p1 = first.p1(k, i);
        const double q0 = first.q0(k, i);
        o[0] = (te.fy[i] + 2.0 * te.fz[i] * te.sx[i] + 2.0 * te.bx[i] + te.sx[i] * te.sx[i]) * y[0] +
               (2.0 * te.sx[i] + te.fz[i]) * z[0] +
               (te.bxx[i] + te.fz[i] * te.sxx[i]) * p0 + te.sxx[i] * q0 + te.hess_quad[i];
        o[1] = (te.fy[i] + 2.0 * te.bx[i] + te.sx[i] * te.sx[i]) * y[1] + te.fz[i] * z[1] +
               te.bxx[i] * p1;
    };
    const int steps = ens.grid.steps;
    auto terminal = [&coeffs, &ens, steps](int i, double* o) {
        o[0] = coeffs.phi_xx(ens.x(i, steps), ens.xhat[steps], ens.terminal_regime());
        o[1] = 0.0;
    };
    SecondOrderAdjoint out;
    out.sol = solve_bsde(ens, 2, driver, terminal, opts.bsde, [&te](int k) { te.prepare(k); });
    return out;
}

namespace {

// shared spike integrand: the bracket of the auxiliary BSDE driver and of
// the Gamma representation
inline double spike_source(const TrajectoryEval& te, const FirstOrderAdjoint& first,
                           const SecondOrderAdjoint& second, int k, int i) {
    const double p0 = first.p0(k, i), p1 = first.p1(k, i), q0 = first.q0(k, i);
    const double P0 = second.P0(k, i), P1 = second.P1(k, i);
    return te.df_shift[i] + p0 * te.dB[i] + p1 * te.dB_hat + q0 * te.dS[i] +
           0.5 * (P0 * te.dS[i] * te.dS[i] + P1 * te.dS2_hat);
}

} // namespace

BackwardSolution solve_auxiliary(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                 const BackwardSolution& cost, const FirstOrderAdjoint& first,
                                 const SecondOrderAdjoint& second, const PolicyFn& alt,
                                 const std::vector<char>& mask, const AdjointOptions& opts,
                                 const ExtraFeatures& extra) {
    TrajectoryEval te(coeffs, ens, &cost);
    te.set_first_order(&first);
    te.set_alt(&alt, &mask);
    auto driver = [&te, &first, &second](int k, int i, const double* y, const double* z,
                                         double* o) {
        te.prepare(k);
        double s = te.spike_step ? spike_source(te, first, second, k, i) : 0.0;
        o[0] = te.fy[i] * y[0] + te.fz[i] * z[0] + s;
    };
    auto terminal = [](int, double* o) { o[0] = 0.0; };
    return solve_bsde(ens, 1, driver, terminal, opts.bsde, [&te](int k) { te.prepare(k); },
                      extra);
}

std::vector<double> solve_gamma(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                const BackwardSolution& cost) {
    TrajectoryEval te(coeffs, ens, &cost);
    const int N = ens.N, steps = ens.grid.steps;
    const double dt = ens.grid.dt();
    std::vector<double> gamma(static_cast<std::size_t>(N) * (steps + 1), 1.0);
    for (int k = 0; k < steps; ++k) {
        te.prepare(k);
        for (int i = 0; i < N; ++i) {
            double g = gamma[static_cast<std::size_t>(i) * (steps + 1) + k];
            double expo = (te.fy[i] - 0.5 * te.fz[i] * te.fz[i]) * dt + te.fz[i] * ens.dw(i, k);
            gamma[static_cast<std::size_t>(i) * (steps + 1) + k + 1] = g * std::exp(expo);
        }
    }
    return gamma;
}

GammaRepresentation gamma_representation(const CoefficientSet& coeffs,
                                         const ParticleEnsemble& ens,
                                         const BackwardSolution& cost,
                                         const FirstOrderAdjoint& first,
                                         const SecondOrderAdjoint& second, const PolicyFn& alt,
                                         const std::vector<char>& mask,
                                         const std::vector<double>& gamma,
                                         const AdjointOptions& opts) {
    (void)opts;
    TrajectoryEval te(coeffs, ens, &cost);
    te.set_first_order(&first);
    te.set_alt(&alt, &mask);
    const int N = ens.N, steps = ens.grid.steps;
    const double dt = ens.grid.dt();
    std::vector<double> per_particle(static_cast<std::size_t>(N), 0.0);
    for (int k = 0; k < steps; ++k) {
        if (!mask[static_cast<std::size_t>(k)]) continue;
        te.prepare(k);
        for (int i = 0; i < N; ++i)
            per_particle[static_cast<std::size_t>(i)] +=
                gamma[static_cast<std::size_t>(i) * (steps + 1) + k] *
                spike_source(te, first, second, k, i) * dt;
    }
    double mean = 0.0;
    for (double v : per_particle) mean += v;
    mean /= N;
    double var = 0.0;
    for (double v : per_particle) var += (v - mean) * (v - mean);
    var = N > 1 ? var / (N - 1) : 0.0;
    return {mean, std::sqrt(var / N)};
}

} // namespace mfmp
