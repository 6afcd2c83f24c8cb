#include "mfmp/bsde.hpp"

#include <cmath>
#include <ostream>
#include <span>
#include <string>

#include "mfmp/parallel.hpp"
#include "mfmp/report.hpp"

namespace mfmp {

double BackwardSolution::y0_mean(int j) const { return y_mean(0, j); }

double BackwardSolution::y_mean(int k, int j) const {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += y(k, i, j);
    return s / N;
}

BackwardSolution solve_bsde(const ParticleEnsemble& ens, int dim, const BsdeDriver& driver,
                            const BsdeTerminal& terminal, const BsdeOptions& opts,
                            const StepHook& on_step, const ExtraFeatures& extra) {
    const int N = ens.N;
    const int steps = ens.grid.steps;
    const double dt = ens.grid.dt();

    BackwardSolution sol;
    sol.grid = ens.grid;
    sol.N = N;
    sol.dim = dim;
    sol.Y.assign(static_cast<std::size_t>(steps + 1) * N * dim, 0.0);
    sol.Z.assign(static_cast<std::size_t>(steps) * N * dim, 0.0);
    sol.condition.assign(static_cast<std::size_t>(steps), 0.0);

    for (int i = 0; i < N; ++i)
        terminal(i, &sol.Y[(static_cast<std::size_t>(steps) * N + i) * dim]);

    std::vector<double> xs(static_cast<std::size_t>(N));
    std::vector<double> target(static_cast<std::size_t>(N));
    std::vector<double> fitted(static_cast<std::size_t>(N));
    std::vector<double> cond_mean(static_cast<std::size_t>(N) * dim); // E_k[Y_{k+1}]
    std::vector<double> ycur(static_cast<std::size_t>(N) * dim);

    for (int k = steps - 1; k >= 0; --k) {
        if (on_step) on_step(k);
        for (int i = 0; i < N; ++i) xs[static_cast<std::size_t>(i)] = ens.x(i, k);
        std::vector<const double*> extras;
        if (extra) extras = extra(k);
        StepRegression step_reg(xs, ens.xhat[k], ens.regime(k), ens.noise.chain.num_regimes,
                                opts.basis, extras, opts.workers);
        sol.condition[static_cast<std::size_t>(k)] = step_reg.condition();

        const double* ynext = &sol.Y[static_cast<std::size_t>(k + 1) * N * dim];
        double* zk = &sol.Z[static_cast<std::size_t>(k) * N * dim];

        // conditional mean of Y_{k+1} per component (pilot fit), then the
        // martingale-increment regression for Z with the pilot as control
        // variate, then the variance-reduced target Y_{k+1} - Z dW for the
        // Y fits. Adding back the sample mean of Z dW keeps every fit
        // mean-preserving, so deterministic problems stay exact.
        for (int j = 0; j < dim; ++j) {
            for (int i = 0; i < N; ++i) target[static_cast<std::size_t>(i)] = ynext[static_cast<std::size_t>(i) * dim + j];
            step_reg.fit(target, fitted);
            for (int i = 0; i < N; ++i) cond_mean[static_cast<std::size_t>(i) * dim + j] = fitted[static_cast<std::size_t>(i)];

            for (int i = 0; i < N; ++i)
                target[static_cast<std::size_t>(i)] =
                    (ynext[static_cast<std::size_t>(i) * dim + j] - cond_mean[static_cast<std::size_t>(i) * dim + j]) *
                    ens.dw(i, k) / dt;
            step_reg.fit(target, fitted);
            for (int i = 0; i < N; ++i) zk[static_cast<std::size_t>(i) * dim + j] = fitted[static_cast<std::size_t>(i)];
        }
        std::vector<double>& cv = cond_mean; // reuse the buffer
        for (int j = 0; j < dim; ++j) {
            double zdw_mean = 0.0;
            for (int i = 0; i < N; ++i)
                zdw_mean += zk[static_cast<std::size_t>(i) * dim + j] * ens.dw(i, k);
            zdw_mean /= N;
            for (int i = 0; i < N; ++i)
                cv[static_cast<std::size_t>(i) * dim + j] =
                    ynext[static_cast<std::size_t>(i) * dim + j] -
                    zk[static_cast<std::size_t>(i) * dim + j] * ens.dw(i, k) + zdw_mean;
        }

        // implicit Y by Picard sweeps, each sweep one regression per component
        std::vector<double> fval(static_cast<std::size_t>(dim));
        std::vector<double> drift(static_cast<std::size_t>(N) * dim);
        for (int j = 0; j < dim; ++j) {
            for (int i = 0; i < N; ++i) target[static_cast<std::size_t>(i)] = cv[static_cast<std::size_t>(i) * dim + j];
            step_reg.fit(target, fitted);
            for (int i = 0; i < N; ++i) ycur[static_cast<std::size_t>(i) * dim + j] = fitted[static_cast<std::size_t>(i)];
        }
        for (int sweep = 0; sweep < std::max(1, opts.picard); ++sweep) {
            for (int i = 0; i < N; ++i) {
                driver(k, i, &ycur[static_cast<std::size_t>(i) * dim], &zk[static_cast<std::size_t>(i) * dim], fval.data());
                for (int j = 0; j < dim; ++j) drift[static_cast<std::size_t>(i) * dim + j] = fval[static_cast<std::size_t>(j)];
            }
            for (int j = 0; j < dim; ++j) {
                for (int i = 0; i < N; ++i)
                    target[static_cast<std::size_t>(i)] = cv[static_cast<std::size_t>(i) * dim + j] +
                                                          drift[static_cast<std::size_t>(i) * dim + j] * dt;
                step_reg.fit(target, fitted);
                for (int i = 0; i < N; ++i) ycur[static_cast<std::size_t>(i) * dim + j] = fitted[static_cast<std::size_t>(i)];
            }
        }
        double* yk = &sol.Y[static_cast<std::size_t>(k) * N * dim];
        for (std::size_t i = 0; i < ycur.size(); ++i) {
            if (!std::isfinite(ycur[i]))
                throw NumericalError("solve_bsde: non-finite Y at step " + std::to_string(k), k);
            yk[i] = ycur[i];
        }
    }
    return sol;
}

CostResult solve_cost(const CoefficientSet& coeffs, const ControlModel& control,
                      const NoiseBundle& noise, double x0, const BsdeOptions& opts) {
    CostResult out;
    out.ensemble = simulate_forward(coeffs, control, noise, x0, opts.workers);
    const ParticleEnsemble& ens = out.ensemble;
    const int steps = ens.grid.steps;

    auto driver = [&coeffs, &ens](int k, int i, const double* y, const double* z, double* o) {
        o[0] = coeffs.f(ens.grid.t(k), ens.x(i, k), ens.xhat[k], y[0], z[0], ens.v(i, k),
                        ens.regime(k));
    };
    auto terminal = [&coeffs, &ens, steps](int i, double* o) {
        o[0] = coeffs.phi(ens.x(i, steps), ens.xhat[steps], ens.terminal_regime());
    };
    out.solution = solve_bsde(ens, 1, driver, terminal, opts);
    out.j = out.solution.y0_mean();
    return out;
}

double evaluate_cost(const CoefficientSet& coeffs, const ControlModel& control,
                     const CostConfig& cfg, const BsdeOptions& opts) {
    double acc = 0.0;
    for (int rep = 0; rep < cfg.chains; ++rep) {
        NoiseBundle nb = make_noise(cfg.gen, cfg.grid, cfg.initial_regime, cfg.particles,
                                    cfg.seed, static_cast<std::uint64_t>(rep));
        acc += solve_cost(coeffs, control, nb, cfg.x0, opts).j;
    }
    return acc / cfg.chains;
}

StabilityReport stability_probe(const ParticleEnsemble& ens, int dim, const BsdeDriver& driver_a,
                                const BsdeTerminal& terminal_a, const BsdeDriver& driver_b,
                                const BsdeTerminal& terminal_b, const BsdeOptions& opts,
                                const StepHook& on_step) {
    BackwardSolution a = solve_bsde(ens, dim, driver_a, terminal_a, opts, on_step);
    BackwardSolution b = solve_bsde(ens, dim, driver_b, terminal_b, opts, on_step);
    const int N = ens.N;
    const int steps = ens.grid.steps;
    const double dt = ens.grid.dt();

    StabilityReport rep;
    double sum_sol = 0.0, sum_data = 0.0;
    std::vector<double> fa(static_cast<std::size_t>(dim)), fb(static_cast<std::size_t>(dim));
    for (int i = 0; i < N; ++i) {
        double sup2 = 0.0, zint = 0.0, fint = 0.0;
        for (int k = 0; k <= steps; ++k) {
            double d2 = 0.0;
            for (int j = 0; j < dim; ++j) {
                double d = a.y(k, i, j) - b.y(k, i, j);
                d2 += d * d;
            }
            sup2 = std::max(sup2, d2);
        }
        for (int k = 0; k < steps; ++k) {
            if (on_step) on_step(k);
            double dz2 = 0.0;
            for (int j = 0; j < dim; ++j) {
                double d = a.z(k, i, j) - b.z(k, i, j);
                dz2 += d * d;
            }
            zint += dz2 * dt;
            // driver difference along b's solution
            driver_a(k, i, &b.Y[(static_cast<std::size_t>(k) * N + i) * dim],
                     &b.Z[(static_cast<std::size_t>(k) * N + i) * dim], fa.data());
            driver_b(k, i, &b.Y[(static_cast<std::size_t>(k) * N + i) * dim],
                     &b.Z[(static_cast<std::size_t>(k) * N + i) * dim], fb.data());
            double df = 0.0;
            for (int j = 0; j < dim; ++j) df += std::abs(fa[static_cast<std::size_t>(j)] - fb[static_cast<std::size_t>(j)]);
            fint += df * dt;
        }
        std::vector<double> xa(static_cast<std::size_t>(dim)), xb(static_cast<std::size_t>(dim));
        terminal_a(i, xa.data());
        terminal_b(i, xb.data());
        double dxi2 = 0.0;
        for (int j = 0; j < dim; ++j) {
            double d = xa[static_cast<std::size_t>(j)] - xb[static_cast<std::size_t>(j)];
            dxi2 += d * d;
        }
        sum_sol += sup2 + zint;
        sum_data += dxi2 + fint * fint;
    }
    rep.diff_norm = sum_sol / N;
    rep.data_norm = sum_data / N;
    rep.implied_c = rep.data_norm > 0.0 ? rep.diff_norm / rep.data_norm : 0.0;
    return rep;
}

void write_bsde_csv(const BackwardSolution& sol, std::ostream& os) {
    os << "t,mean_y,std_y,mean_z,std_z,condition\n";
    for (int k = 0; k <= sol.grid.steps; ++k) {
        double my = 0.0, sy = 0.0, mz = 0.0, sz = 0.0;
        for (int i = 0; i < sol.N; ++i) my += sol.y(k, i);
        my /= sol.N;
        for (int i = 0; i < sol.N; ++i) sy += (sol.y(k, i) - my) * (sol.y(k, i) - my);
        sy = sol.N > 1 ? std::sqrt(sy / (sol.N - 1)) : 0.0;
        if (k < sol.grid.steps) {
            for (int i = 0; i < sol.N; ++i) mz += sol.z(k, i);
            mz /= sol.N;
            for (int i = 0; i < sol.N; ++i) sz += (sol.z(k, i) - mz) * (sol.z(k, i) - mz);
            sz = sol.N > 1 ? std::sqrt(sz / (sol.N - 1)) : 0.0;
        }
        os << fmt_double(sol.grid.t(k)) << ',' << fmt_double(my) << ',' << fmt_double(sy) << ','
           << fmt_double(mz) << ',' << fmt_double(sz) << ','
           << fmt_double(k < sol.grid.steps ? sol.condition[static_cast<std::size_t>(k)] : 0.0)
           << '\n';
    }
}

} // namespace mfmp
