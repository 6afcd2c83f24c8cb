#include "mfmp/variation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "mfmp/report.hpp"

namespace mfmp {

VariationProcess solve_first_variation(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                       const PolicyFn& alt, const std::vector<char>& mask) {
    const int N = ens.N, steps = ens.grid.steps;
    const double dt = ens.grid.dt();
    TrajectoryEval te(coeffs, ens, nullptr);
    te.set_alt(&alt, &mask);

    VariationProcess out;
    out.N = N;
    out.steps = steps;
    out.X.assign(static_cast<std::size_t>(N) * (steps + 1), 0.0);
    out.hat.assign(static_cast<std::size_t>(steps) + 1, 0.0);

    for (int k = 0; k < steps; ++k) {
        te.prepare(k);
        const double h = out.hat[static_cast<std::size_t>(k)];
        const double on = mask[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
            double xi = out.x(i, k);
            double drift = te.bx[i] * xi + te.bxp[i] * h + te.dB[i] * on;
            double diff = te.sx[i] * xi + te.sxp[i] * h + te.dS[i] * on;
            double xn = xi + drift * dt + diff * ens.dw(i, k);
            out.X[static_cast<std::size_t>(k + 1) * N + i] = xn;
            sum += xn;
        }
        out.hat[static_cast<std::size_t>(k) + 1] = sum / N;
    }
    return out;
}

std::vector<double> filtered_first_variation(const CoefficientSet& coeffs,
                                             const ParticleEnsemble& ens, const PolicyFn& alt,
                                             const std::vector<char>& mask) {
    const int N = ens.N, steps = ens.grid.steps;
    const double dt = ens.grid.dt();
    TrajectoryEval te(coeffs, ens, nullptr);
    te.set_alt(&alt, &mask);
    std::vector<double> hat(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int k = 0; k < steps; ++k) {
        te.prepare(k);
        double bx_mean = 0.0;
        for (int i = 0; i < N; ++i) bx_mean += te.bx[i];
        bx_mean /= N;
        const double on = mask[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        hat[static_cast<std::size_t>(k) + 1] =
            hat[static_cast<std::size_t>(k)] +
            ((bx_mean + te.bxp_hat) * hat[static_cast<std::size_t>(k)] + te.dB_hat * on) * dt;
    }
    return hat;
}

VariationProcess solve_second_variation(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                                        const PolicyFn& alt, const std::vector<char>& mask,
                                        const VariationProcess& first) {
    const int N = ens.N, steps = ens.grid.steps;
    const double dt = ens.grid.dt();
    TrajectoryEval te(coeffs, ens, nullptr);
    te.set_alt(&alt, &mask);

    VariationProcess out;
    out.N = N;
    out.steps = steps;
    out.X.assign(static_cast<std::size_t>(N) * (steps + 1), 0.0);
    out.hat.assign(static_cast<std::size_t>(steps) + 1, 0.0);

    for (int k = 0; k < steps; ++k) {
        te.prepare(k);
        const double h = out.hat[static_cast<std::size_t>(k)];
        const double on = mask[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
            double xi = out.x(i, k);
            double x1 = first.x(i, k);
            double drift = te.bx[i] * xi + te.bxp[i] * h + 0.5 * te.bxx[i] * x1 * x1 +
                           te.dBx[i] * x1 * on;
            double diff = te.sx[i] * xi + te.sxp[i] * h + 0.5 * te.sxx[i] * x1 * x1 +
                          te.dSx[i] * x1 * on;
            double xn = xi + drift * dt + diff * ens.dw(i, k);
            out.X[static_cast<std::size_t>(k + 1) * N + i] = xn;
            sum += xn;
        }
        out.hat[static_cast<std::size_t>(k) + 1] = sum / N;
    }
    return out;
}

BackwardSolution solve_first_variational_bsde(const CoefficientSet& coeffs,
                                              const ParticleEnsemble& ens,
                                              const BackwardSolution& cost,
                                              const FirstOrderAdjoint& adj, const PolicyFn& alt,
                                              const std::vector<char>& mask,
                                              const VariationProcess& x1,
                                              const BsdeOptions& opts,
                                              const ExtraFeatures& extra) {
    TrajectoryEval te(coeffs, ens, &cost);
    te.set_alt(&alt, &mask);
    auto driver = [&](int k, int i, const double* y, const double* z, double* o) {
        te.prepare(k);
        const double on = te.spike_step ? 1.0 : 0.0;
        const double p0 = adj.p0(k, i), p1 = adj.p1(k, i), q0 = adj.q0(k, i);
        o[0] = te.fx[i] * x1.x(i, k) + te.fxp[i] * x1.hat[static_cast<std::size_t>(k)] +
               te.fy[i] * y[0] + te.fz[i] * (z[0] - p0 * te.dS[i] * on) -
               on * (q0 * te.dS[i] + p0 * te.dB[i] + p1 * te.dB_hat);
    };
    const int steps = ens.grid.steps;
    auto terminal = [&](int i, double* o) {
        const double xT = ens.x(i, steps), xh = ens.xhat[steps];
        const int rT = ens.terminal_regime();
        o[0] = coeffs.phi_x(xT, xh, rT) * x1.x(i, steps) +
               coeffs.phi_xp(xT, xh, rT) * x1.hat[static_cast<std::size_t>(steps)];
    };
    ExtraFeatures ex = extra;
    if (!ex) ex = [&x1](int k) { return std::vector<const double*>{x1.step(k)}; };
    return solve_bsde(ens, 1, driver, terminal, opts, [&te](int k) { te.prepare(k); }, ex);
}

BackwardSolution solve_second_variational_bsde(const CoefficientSet& coeffs,
                                               const ParticleEnsemble& ens,
                                               const BackwardSolution& cost,
                                               const FirstOrderAdjoint& adj, const PolicyFn& alt,
                                               const std::vector<char>& mask,
                                               const VariationProcess& x1,
                                               const VariationProcess& x2,
                                               const BsdeOptions& opts,
                                               const ExtraFeatures& extra) {
    TrajectoryEval te(coeffs, ens, &cost);
    te.set_alt(&alt, &mask);
    te.set_first_order(&adj);
    auto driver = [&](int k, int i, const double* y, const double* z, double* o) {
        te.prepare(k);
        const double on = te.spike_step ? 1.0 : 0.0;
        const double p0 = adj.p0(k, i), p1 = adj.p1(k, i), q0 = adj.q0(k, i);
        const double v1 = x1.x(i, k);
        o[0] = te.fx[i] * x2.x(i, k) + te.fxp[i] * x2.hat[static_cast<std::size_t>(k)] +
               te.fy[i] * y[0] + te.fz[i] * z[0] + 0.5 * te.hess_quad[i] * v1 * v1 +
               on * (te.df_shift[i] + q0 * te.dS[i] + p0 * te.dB[i] + p1 * te.dB_hat);
    };
    const int steps = ens.grid.steps;
    auto terminal = [&](int i, double* o) {
        const double xT = ens.x(i, steps), xh = ens.xhat[steps];
        const int rT = ens.terminal_regime();
        const double v1 = x1.x(i, steps);
        o[0] = coeffs.phi_x(xT, xh, rT) * x2.x(i, steps) +
               coeffs.phi_xp(xT, xh, rT) * x2.hat[static_cast<std::size_t>(steps)] +
               0.5 * coeffs.phi_xx(xT, xh, rT) * v1 * v1;
    };
    // (X1)^2 enters the representation through the P-terms, so it joins the
    // regression state alongside X1 and X2
    std::vector<double> x1sq;
    ExtraFeatures ex = extra;
    if (!ex) {
        x1sq.resize(x1.X.size());
        for (std::size_t n = 0; n < x1sq.size(); ++n) x1sq[n] = x1.X[n] * x1.X[n];
        ex = [&x1, &x2, &x1sq, N = ens.N](int k) {
            return std::vector<const double*>{x2.step(k), x1.step(k),
                                              x1sq.data() + static_cast<std::size_t>(k) * N};
        };
    }
    return solve_bsde(ens, 1, driver, terminal, opts, [&te](int k) { te.prepare(k); }, ex);
}

VariationPipeline::VariationPipeline(const CoefficientSet& coeffs, ControlModel base,
                                     ControlModel alt, PipelineConfig cfg)
    : coeffs_(coeffs), base_ctrl_(std::move(base)), alt_ctrl_(std::move(alt)),
      cfg_(std::move(cfg)) {}

void VariationPipeline::prepare_rep(int rep) {
    if (rep == rep_) return;
    rep_ = rep;
    noise_ = make_noise(cfg_.gen, cfg_.grid, cfg_.initial_regime, cfg_.particles, cfg_.seed,
                        static_cast<std::uint64_t>(rep));
    base_ = solve_cost(coeffs_, base_ctrl_, *noise_, cfg_.x0, cfg_.adjoint.bsde);
    first_ = solve_first_order_adjoint(coeffs_, base_->ensemble, base_->solution, cfg_.adjoint);
    second_ = solve_second_order_adjoint(coeffs_, base_->ensemble, base_->solution, *first_,
                                         cfg_.adjoint);
}

VariationalBundle VariationPipeline::run_spike(const SpikeSpec& spike) {
    if (rep_ < 0) prepare_rep(0);
    VariationalBundle b;
    b.base = *base_;
    b.first = *first_;
    b.second = *second_;
    b.mask = spike.step_mask(cfg_.grid);
    b.epsilon = spike.measure();

    ControlModel overlaid = spike_overlay(base_ctrl_, alt_ctrl_, spike, cfg_.grid);
    const PolicyFn& alt = alt_ctrl_.policy.eval;
    const ParticleEnsemble& ens = base_->ensemble;
    const int N = ens.N, steps = cfg_.grid.steps;

    b.pert.ensemble = simulate_forward(coeffs_, overlaid, *noise_, cfg_.x0,
                                       cfg_.adjoint.bsde.workers);
    b.x1 = solve_first_variation(coeffs_, ens, alt, b.mask);
    b.x2 = solve_second_variation(coeffs_, ens, alt, b.mask, b.x1);

    // One per-step feature set shared by every backward solve of the
    // bundle: the regression projector is then common, so differences of
    // fitted solutions are projections of difference targets and the
    // delta-process metrics keep their epsilon scaling instead of being
    // floored by independent regression noise.
    std::vector<double> d1x(static_cast<std::size_t>(steps + 1) * N);
    std::vector<double> x1sq(static_cast<std::size_t>(steps + 1) * N);
    for (int k = 0; k <= steps; ++k)
        for (int i = 0; i < N; ++i) {
            d1x[static_cast<std::size_t>(k) * N + i] = b.pert.ensemble.x(i, k) - ens.x(i, k);
            double v1 = b.x1.x(i, k);
            x1sq[static_cast<std::size_t>(k) * N + i] = v1 * v1;
        }
    ExtraFeatures unified = [&, N](int k) {
        const std::size_t off = static_cast<std::size_t>(k) * N;
        return std::vector<const double*>{d1x.data() + off, b.x1.step(k), b.x2.step(k),
                                          x1sq.data() + off};
    };

    // base cost re-solved under the unified basis (CRN at the projector
    // level); the cached plain solve still backs the adjoint equations
    {
        auto driver = [&](int k, int i, const double* y, const double* z, double* o) {
            o[0] = coeffs_.f(ens.grid.t(k), ens.x(i, k), ens.xhat[k], y[0], z[0], ens.v(i, k),
                             ens.regime(k));
        };
        auto terminal = [&](int i, double* o) {
            o[0] = coeffs_.phi(ens.x(i, steps), ens.xhat[steps], ens.terminal_regime());
        };
        b.base.solution = solve_bsde(ens, 1, driver, terminal, cfg_.adjoint.bsde, {}, unified);
        b.base.j = b.base.solution.y0_mean();
    }
    {
        const ParticleEnsemble& pens = b.pert.ensemble;
        auto driver = [&](int k, int i, const double* y, const double* z, double* o) {
            o[0] = coeffs_.f(pens.grid.t(k), pens.x(i, k), pens.xhat[k], y[0], z[0],
                             pens.v(i, k), pens.regime(k));
        };
        auto terminal = [&](int i, double* o) {
            o[0] = coeffs_.phi(pens.x(i, steps), pens.xhat[steps], pens.terminal_regime());
        };
        // solved on the base ensemble object: same Brownian increments and
        // the same features, only the target trajectory is perturbed
        b.pert.solution = solve_bsde(ens, 1, driver, terminal, cfg_.adjoint.bsde, {}, unified);
        b.pert.j = b.pert.solution.y0_mean();
    }

    b.y1 = solve_first_variational_bsde(coeffs_, ens, base_->solution, *first_, alt, b.mask, b.x1,
                                        cfg_.adjoint.bsde, unified);
    b.y2 = solve_second_variational_bsde(coeffs_, ens, base_->solution, *first_, alt, b.mask,
                                         b.x1, b.x2, cfg_.adjoint.bsde, unified);
    b.aux = solve_auxiliary(coeffs_, ens, base_->solution, *first_, *second_, alt, b.mask,
                            cfg_.adjoint, unified);
    b.gamma = solve_gamma(coeffs_, ens, base_->solution);
    return b;
}

namespace {

double rel_rms(const std::vector<double>& resid, const std::vector<double>& ref) {
    double num = 0.0, den = 0.0;
    for (double r : resid) num += r * r;
    for (double r : ref) den += r * r;
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / resid.size()) / std::sqrt(den / ref.size());
}

} // namespace

std::vector<IdentityResidual> check_identities(const CoefficientSet& coeffs,
                                               const VariationalBundle& b, const PolicyFn& alt,
                                               double tol_first, double tol_second,
                                               double tol_expansion) {
    const ParticleEnsemble& ens = b.base.ensemble;
    const int N = ens.N, steps = ens.grid.steps;

    std::vector<double> x1sq_hat(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int k = 0; k <= steps; ++k) {
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += b.x1.x(i, k) * b.x1.x(i, k);
        x1sq_hat[static_cast<std::size_t>(k)] = s / N;
    }

    auto make = [](std::string name, double rr, double tol) {
        IdentityResidual id{std::move(name), rr, tol, false};
        id.pass = rr <= tol;
        return id;
    };

    std::vector<double> res, ref;
    const std::size_t nodes = static_cast<std::size_t>(N) * (steps + 1);
    res.reserve(nodes);
    ref.reserve(nodes);

    // (a) first-order Y-relation
    for (int k = 0; k <= steps; ++k)
        for (int i = 0; i < N; ++i) {
            double rhs = b.first.p0(k, i) * b.x1.x(i, k) +
                         b.first.p1(k, i) * b.x1.hat[static_cast<std::size_t>(k)];
            res.push_back(b.y1.y(k, i) - rhs);
            ref.push_back(b.y1.y(k, i));
        }
    IdentityResidual ia = make("first_order_y", rel_rms(res, ref), tol_first);

    // Z-relations need the diffusion derivatives and spike deltas
    TrajectoryEval te(coeffs, ens, nullptr);
    te.set_alt(&alt, &b.mask);

    res.clear();
    ref.clear();
    std::vector<double> res2z, ref2z;
    for (int k = 0; k < steps; ++k) {
        te.prepare(k);
        const double on = b.mask[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        for (int i = 0; i < N; ++i) {
            const double p0 = b.first.p0(k, i), q0 = b.first.q0(k, i), q1 = b.first.q1(k, i);
            const double x1v = b.x1.x(i, k);
            double rhs1 = (p0 * te.sx[i] + q0) * x1v +
                          (p0 * te.sxp[i] + q1) * b.x1.hat[static_cast<std::size_t>(k)] +
                          p0 * te.dS[i] * on;
            res.push_back(b.y1.z(k, i) - rhs1);
            ref.push_back(b.y1.z(k, i));

            double rhs2 = (p0 * te.sx[i] + q0) * b.x2.x(i, k) +
                          (p0 * te.sxp[i] + q1) * b.x2.hat[static_cast<std::size_t>(k)] +
                          0.5 * x1v * x1v *
                              (p0 * te.sxx[i] + 2.0 * b.second.P0(k, i) * te.sx[i] +
                               b.second.Q0(k, i)) +
                          0.5 * x1sq_hat[static_cast<std::size_t>(k)] * b.second.Q1(k, i) +
                          x1v * on * (b.second.P0(k, i) * te.dS[i] + p0 * te.dSx[i]) +
                          b.aux.z(k, i);
            res2z.push_back(b.y2.z(k, i) - rhs2);
            ref2z.push_back(b.y2.z(k, i));
        }
    }
    // Z-estimates are regression quantities on both sides; diagnostic bands
    IdentityResidual iaz = make("first_order_z", rel_rms(res, ref), 5.0 * tol_first);
    IdentityResidual ibz = make("second_order_z", rel_rms(res2z, ref2z), 5.0 * tol_second);

    // (b) second-order Y-relation including the P-terms and Ytilde
    std::vector<double> res2, ref2;
    for (int k = 0; k <= steps; ++k)
        for (int i = 0; i < N; ++i) {
            double x1v = b.x1.x(i, k);
            double rhs = b.first.p0(k, i) * b.x2.x(i, k) +
                         b.first.p1(k, i) * b.x2.hat[static_cast<std::size_t>(k)] +
                         0.5 * b.second.P0(k, i) * x1v * x1v +
                         0.5 * b.second.P1(k, i) * x1sq_hat[static_cast<std::size_t>(k)] +
                         b.aux.y(k, i);
            res2.push_back(b.y2.y(k, i) - rhs);
            ref2.push_back(b.y2.y(k, i));
        }
    IdentityResidual ib = make("second_order_y", rel_rms(res2, ref2), tol_second);

    // (c) full expansion of Y^eps - barY
    std::vector<double> res3, ref3;
    for (int k = 0; k <= steps; ++k)
        for (int i = 0; i < N; ++i) {
            double x1v = b.x1.x(i, k);
            double lhs = b.pert.solution.y(k, i) - b.base.solution.y(k, i);
            double rhs = b.first.p0(k, i) * (b.x1.x(i, k) + b.x2.x(i, k)) +
                         b.first.p1(k, i) * (b.x1.hat[static_cast<std::size_t>(k)] +
                                             b.x2.hat[static_cast<std::size_t>(k)]) +
                         0.5 * b.second.P0(k, i) * x1v * x1v +
                         0.5 * b.second.P1(k, i) * x1sq_hat[static_cast<std::size_t>(k)] +
                         b.aux.y(k, i);
            res3.push_back(lhs - rhs);
            ref3.push_back(lhs);
        }
    IdentityResidual ic = make("expansion_y", rel_rms(res3, ref3), tol_expansion);

    return {ia, iaz, ib, ibz, ic};
}

bool RateStudy::all_gates_pass() const {
    for (const auto& f : fits)
        if (f.gate && f.verdict != "pass" && !f.zero) return false;
    return expansion_pass;
}

namespace {

struct QuantityDef {
    std::string name;
    double beta;
    double lo, hi;
    bool one_sided;
    bool gate;
};

// per-spike metrics in the fixed order of quantity_defs(beta). beta drives
// the moment of the sup-norm targets; the delta2-Y estimate is pinned to
// the fourth moment and the delta3 remainders to squared metrics.
std::vector<double> bundle_metrics(const VariationalBundle& b, double beta) {
    const ParticleEnsemble& base = b.base.ensemble;
    const ParticleEnsemble& pert = b.pert.ensemble;
    const int N = base.N, steps = base.grid.steps;
    const double dt = base.grid.dt();

    auto sup_abs = [steps](auto&& val) {
        double m = 0.0;
        for (int k = 0; k <= steps; ++k) m = std::max(m, std::abs(val(k)));
        return m;
    };
    auto pw = [beta](double v) { return std::pow(v, beta); };

    double m_d1x = 0.0, m_x1 = 0.0, m_x2 = 0.0, m_d2x = 0.0, m_y1 = 0.0;
    double m_d2y4 = 0.0, m_d3x = 0.0, m_d3y = 0.0;
    for (int i = 0; i < N; ++i) {
        double s_d1x = sup_abs([&](int k) { return pert.x(i, k) - base.x(i, k); });
        double s_x1 = sup_abs([&](int k) { return b.x1.x(i, k); });
        double s_x2 = sup_abs([&](int k) { return b.x2.x(i, k); });
        double s_d2x = sup_abs([&](int k) { return pert.x(i, k) - base.x(i, k) - b.x1.x(i, k); });
        double s_d3x =
            sup_abs([&](int k) { return pert.x(i, k) - base.x(i, k) - b.x1.x(i, k) - b.x2.x(i, k); });
        double s_y1 = sup_abs([&](int k) { return b.y1.y(k, i); });
        double s_d2y = sup_abs(
            [&](int k) { return b.pert.solution.y(k, i) - b.base.solution.y(k, i) - b.y1.y(k, i); });
        double s_d3y = sup_abs([&](int k) {
            return b.pert.solution.y(k, i) - b.base.solution.y(k, i) - b.y1.y(k, i) - b.y2.y(k, i);
        });
        double z3int = 0.0;
        for (int k = 0; k < steps; ++k) {
            double dz = b.pert.solution.z(k, i) - b.base.solution.z(k, i) - b.y1.z(k, i) -
                        b.y2.z(k, i);
            z3int += dz * dz * dt;
        }
        m_d1x += pw(s_d1x);
        m_x1 += pw(s_x1);
        m_x2 += pw(s_x2);
        m_d2x += pw(s_d2x);
        m_y1 += pw(s_y1);
        m_d2y4 += s_d2y * s_d2y * s_d2y * s_d2y;
        m_d3x += s_d3x * s_d3x;
        m_d3y += s_d3y * s_d3y + z3int;
    }
    m_d1x /= N;
    m_x1 /= N;
    m_x2 /= N;
    m_d2x /= N;
    m_y1 /= N;
    m_d2y4 /= N;
    m_d3x /= N;
    m_d3y /= N;

    auto hat_metric = [&](auto&& val) {
        double m = 0.0;
        for (int k = 0; k <= steps; ++k) m = std::max(m, std::abs(val(k)));
        return pw(m);
    };
    double m_d1xh = hat_metric([&](int k) { return pert.xhat[k] - base.xhat[k]; });
    double m_x1h = hat_metric([&](int k) { return b.x1.hat[static_cast<std::size_t>(k)]; });
    double m_x2h = hat_metric([&](int k) { return b.x2.hat[static_cast<std::size_t>(k)]; });
    double m_d2xh = hat_metric([&](int k) {
        return pert.xhat[k] - base.xhat[k] - b.x1.hat[static_cast<std::size_t>(k)];
    });
    double m_d3xh = 0.0;
    {
        double m = 0.0;
        for (int k = 0; k <= steps; ++k)
            m = std::max(m, std::abs(pert.xhat[k] - base.xhat[k] -
                                     b.x1.hat[static_cast<std::size_t>(k)] -
                                     b.x2.hat[static_cast<std::size_t>(k)]));
        m_d3xh = m * m; // squared like the other delta3 remainders
    }
    double m_d3x_comb = m_d3x + m_d3xh;

    return {m_d1x, m_d1xh, m_x1, m_x1h, m_x2, m_x2h, m_d2x, m_d2xh, m_y1, m_d2y4, m_d3x_comb,
            m_d3y};
}

// expected slopes scale with beta; band half-widths scale with beta/2 so
// beta = 2 reproduces the shipped acceptance bands
std::vector<QuantityDef> quantity_defs(double beta) {
    const double h = beta / 2.0;
    auto name = [beta](const char* stem, bool fixed = false) {
        if (fixed) return std::string(stem);
        return std::string(stem) + "_sup" + fmt_double(beta);
    };
    return {
        {name("delta1_x"), beta, 0.5 * beta - 0.3 * h, 0.5 * beta + 0.3 * h, false, true},
        {name("delta1_xhat"), beta, beta - 0.4 * h, beta + 0.4 * h, false, true},
        {name("x1"), beta, 0.5 * beta - 0.3 * h, 0.5 * beta + 0.3 * h, false, true},
        {name("x1hat"), beta, beta - 0.4 * h, beta + 0.4 * h, false, true},
        {name("x2"), beta, beta - 0.3 * h, beta + 0.3 * h, false, true},
        {name("x2hat"), beta, 1.5 * beta - 0.5 * h, 1.5 * beta + 0.5 * h, false, false},
        {name("delta2_x"), beta, beta - 0.4 * h, beta + 0.4 * h, false, false},
        {name("delta2_xhat"), beta, 2.3 * h, 0.0, true, false},
        {name("y1"), beta, 0.5 * beta - 0.3 * h, 0.5 * beta + 0.3 * h, false, false},
        {"delta2_y_sup4", 4, 2.0, 0.0, true, true},
        {"delta3_x_sup2", 2, 2.0, 0.0, true, true},
        {"delta3_yz_sup2", 2, 2.0, 0.0, true, true},
    };
}

} // namespace

RateStudy rate_probe(VariationPipeline& pipe, const SpikeSpec& spike, double spike_t0, int reps,
                     double eps_ref, double beta) {
    const auto defs = quantity_defs(beta);
    const std::size_t nq = defs.size();
    const std::vector<double>& ladder = spike.ladder;
    const std::size_t ne = ladder.size();

    // metrics[e][q] accumulated across reps, plus squares for the spread
    std::vector<std::vector<double>> acc(ne, std::vector<double>(nq, 0.0));
    std::vector<std::vector<double>> acc2(ne, std::vector<double>(nq, 0.0));
    std::vector<double> racc(ne, 0.0); // expansion remainder R(eps)
    std::vector<double> racc2(ne, 0.0);
    std::vector<double> res_c(ne, 0.0), res_c2(ne, 0.0); // identity (c) per eps

    RateStudy study;
    for (int rep = 0; rep < reps; ++rep) {
        pipe.prepare_rep(rep);
        for (std::size_t e = 0; e < ne; ++e) {
            SpikeSpec s = SpikeSpec::single(spike_t0, ladder[e]);
            VariationalBundle b = pipe.run_spike(s);
            auto m = bundle_metrics(b, beta);
            for (std::size_t q = 0; q < nq; ++q) {
                acc[e][q] += m[q];
                acc2[e][q] += m[q] * m[q];
            }
            double r = std::abs(b.pert.j - b.base.j - b.aux.y0_mean()) / b.epsilon;
            racc[e] += r;
            racc2[e] += r * r;
            auto ids = check_identities(pipe.coeffs(), b, pipe.alt_control().policy.eval, 0.05,
                                        0.10, 0.10);
            for (const auto& id : ids)
                if (id.name == "expansion_y") {
                    res_c[e] += id.rel_rms;
                    res_c2[e] += id.rel_rms * id.rel_rms;
                }
            if (rep == 0 && std::abs(ladder[e] - eps_ref) < 1e-12) study.identities = ids;
        }
    }

    auto mean_se = [&](double sum, double sum2) {
        double mean = sum / reps;
        double var = reps > 1 ? std::max(0.0, sum2 / reps - mean * mean) * reps / (reps - 1) : 0.0;
        return std::pair<double, double>(mean, reps > 1 ? std::sqrt(var / reps) : 0.0);
    };

    for (std::size_t q = 0; q < nq; ++q) {
        RateFit fit;
        fit.quantity = defs[q].name;
        fit.beta = defs[q].beta;
        fit.band_lo = defs[q].lo;
        fit.band_hi = defs[q].hi;
        fit.one_sided = defs[q].one_sided;
        fit.gate = defs[q].gate;
        for (std::size_t e = 0; e < ne; ++e) {
            auto [m, se] = mean_se(acc[e][q], acc2[e][q]);
            fit.points.push_back({ladder[e], m, se});
        }
        // drop the smallest epsilon when its metric sits at the noise floor
        std::vector<RatePoint> pts = fit.points;
        std::sort(pts.begin(), pts.end(),
                  [](const RatePoint& a, const RatePoint& b) { return a.eps > b.eps; });
        if (reps > 1 && pts.size() > 3) {
            const RatePoint& last = pts.back();
            if (last.metric < 10.0 * 3.0 * last.std_error) pts.pop_back();
        }
        bool degenerate = false, all_zero = true;
        for (const auto& p : pts) {
            if (!(p.metric > 0.0)) degenerate = true;
            if (std::abs(p.metric) > 1e-22) all_zero = false;
        }
        if (degenerate || all_zero || pts.size() < 3) {
            fit.verdict = "indeterminate";
            fit.zero = all_zero; // the estimate holds trivially at zero
            study.fits.push_back(fit);
            continue;
        }
        // least squares of log(metric) on log(eps)
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(pts.size());
        for (const auto& p : pts) {
            double lx = std::log(p.eps), ly = std::log(p.metric);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        double denom = n * sxx - sx * sx;
        fit.slope = (n * sxy - sx * sy) / denom;
        double b0 = (sy - fit.slope * sx) / n;
        double rss = 0.0;
        for (const auto& p : pts) {
            double e2 = std::log(p.metric) - (b0 + fit.slope * std::log(p.eps));
            rss += e2 * e2;
        }
        fit.slope_stderr = pts.size() > 2
                               ? std::sqrt(rss / (n - 2.0) / (sxx - sx * sx / n))
                               : 0.0;
        bool ok = fit.one_sided ? fit.slope > fit.band_lo
                                : (fit.slope >= fit.band_lo && fit.slope <= fit.band_hi);
        fit.verdict = ok ? "pass" : "fail";
        study.fits.push_back(fit);
    }

    for (std::size_t e = 0; e < ne; ++e) {
        auto [m, se] = mean_se(racc[e], racc2[e]);
        study.expansion.push_back({ladder[e], m, se});
        auto [mc, sec] = mean_se(res_c[e], res_c2[e]);
        study.expansion_residual.push_back({ladder[e], mc, sec});
    }
    auto endpoints = [](const std::vector<RatePoint>& pts) {
        double r_big = 0.0, r_small = 0.0, e_big = 0.0, e_small = 1e300;
        for (const auto& p : pts) {
            if (p.eps > e_big) {
                e_big = p.eps;
                r_big = p.metric;
            }
            if (p.eps < e_small) {
                e_small = p.eps;
                r_small = p.metric;
            }
        }
        return std::pair<double, double>(r_big, r_small);
    };
    auto [r_big, r_small] = endpoints(study.expansion);
    study.expansion_pass = r_small < 0.5 * r_big;
    auto [c_big, c_small] = endpoints(study.expansion_residual);
    study.expansion_residual_decreasing = c_small < c_big;
    return study;
}

void write_rate_csv(const RateStudy& s, std::ostream& os) {
    os << "quantity,beta,eps,metric,std_error,slope,slope_stderr,band_lo,band_hi,gate,verdict\n";
    for (const auto& f : s.fits)
        for (const auto& p : f.points)
            os << f.quantity << ',' << fmt_double(f.beta) << ',' << fmt_double(p.eps) << ','
               << fmt_double(p.metric) << ',' << fmt_double(p.std_error) << ','
               << fmt_double(f.slope) << ',' << fmt_double(f.slope_stderr) << ','
               << fmt_double(f.band_lo) << ','
               << (f.one_sided ? "inf" : fmt_double(f.band_hi)) << ',' << (f.gate ? 1 : 0) << ','
               << f.verdict << '\n';
    for (const auto& p : s.expansion)
        os << "expansion_remainder,1," << fmt_double(p.eps) << ',' << fmt_double(p.metric) << ','
           << fmt_double(p.std_error) << ",,,,," << (s.expansion_pass ? "pass" : "fail") << '\n';
    for (const auto& p : s.expansion_residual)
        os << "expansion_identity_rel_rms,1," << fmt_double(p.eps) << ',' << fmt_double(p.metric)
           << ',' << fmt_double(p.std_error) << ",,,,,"
           << (s.expansion_residual_decreasing ? "pass" : "fail") << '\n';
}

void write_identity_csv(const std::vector<IdentityResidual>& ids, std::ostream& os) {
    os << "identity,rel_rms,tolerance,verdict\n";
    for (const auto& id : ids)
        os << id.name << ',' << fmt_double(id.rel_rms) << ',' << fmt_double(id.tolerance) << ','
           << (id.pass ? "pass" : "fail") << '\n';
}

} // namespace mfmp
