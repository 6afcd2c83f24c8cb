#include "mfmp/mp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfmp/report.hpp"

namespace mfmp {

double hamiltonian(const CoefficientSet& coeffs, const HamiltonianContext& c) {
    double sig_v = coeffs.sigma(c.t, c.x, c.xhat, c.v, c.regime);
    double sig_base = coeffs.sigma(c.t, c.x, c.xhat, c.vbar, c.regime);
    double zshift = c.z + c.p0 * (sig_v - sig_base);
    return c.p0 * coeffs.b(c.t, c.x, c.xhat, c.v, c.regime) + c.p1 * c.b_hat + c.q0 * sig_v +
           coeffs.f(c.t, c.x, c.xhat, c.y, zshift, c.v, c.regime);
}

double h_function(const CoefficientSet& coeffs, const HamiltonianContext& c, double P0,
                  double P1, double s2_hat) {
    double ds = coeffs.sigma(c.t, c.x, c.xhat, c.v, c.regime) -
                coeffs.sigma(c.t, c.x, c.xhat, c.vbar, c.regime);
    return hamiltonian(coeffs, c) + 0.5 * P0 * ds * ds + 0.5 * P1 * s2_hat;
}

nlohmann::json MpReport::to_json() const {
    return nlohmann::json{{"candidate", candidate},
                          {"violation_fraction", violation_fraction},
                          {"worst_violation", worst_violation},
                          {"tol_scale", tol_scale},
                          {"quantile", quantile},
                          {"points", points},
                          {"violations", violations},
                          {"verdict", pass ? "pass" : "fail"}};
}

namespace {

// shared pointwise quantile test: delta_of(k, v, out) fills the
// cross-particle vector of H(v) - H(vbar) values at step k
template <typename DeltaFn>
MpReport quantile_check(int steps, int N, const std::vector<double>& grid, double quantile,
                        DeltaFn&& delta_of) {
    MpReport rep;
    rep.quantile = quantile;
    std::vector<double> delta(static_cast<std::size_t>(N));
    long points = 0, violations = 0;
    double worst = 0.0;
    for (int k = 0; k < steps; ++k) {
        for (double v : grid) {
            delta_of(k, v, delta);
            double mean = 0.0;
            for (double d : delta) mean += d;
            mean /= N;
            double var = 0.0;
            for (double d : delta) var += (d - mean) * (d - mean);
            var = N > 1 ? var / (N - 1) : 0.0;
            double scale = std::sqrt(var);
            double tol = 3.0 * scale / std::sqrt(static_cast<double>(N)) +
                         1e-12 * (1.0 + std::abs(mean));
            for (double d : delta) {
                ++points;
                if (d < -tol) {
                    ++violations;
                    worst = std::min(worst, d);
                }
            }
        }
    }
    rep.points = points;
    rep.violations = violations;
    rep.violation_fraction = points > 0 ? static_cast<double>(violations) / points : 0.0;
    rep.worst_violation = worst;
    rep.pass = rep.violation_fraction <= quantile;
    return rep;
}

} // namespace

MpReport check_mp(const CoefficientSet& coeffs, const ParticleEnsemble& ens,
                  const BackwardSolution& cost, const FirstOrderAdjoint& first,
                  const SecondOrderAdjoint& second, const std::vector<double>& control_grid,
                  double quantile, int workers) {
    (void)workers;
    const int N = ens.N, steps = ens.grid.steps;
    std::vector<double> h_base(static_cast<std::size_t>(N));
    std::vector<double> sig_base(static_cast<std::size_t>(N));
    int cur_k = -1;

    auto prepare_base = [&](int k) {
        if (k == cur_k) return;
        cur_k = k;
        const double t = ens.grid.t(k), xh = ens.xhat[k];
        const int rg = ens.regime(k);
        double bhat = 0.0;
        for (int i = 0; i < N; ++i) bhat += coeffs.b(t, ens.x(i, k), xh, ens.v(i, k), rg);
        bhat /= N;
        for (int i = 0; i < N; ++i) {
            const double xi = ens.x(i, k), vi = ens.v(i, k);
            sig_base[static_cast<std::size_t>(i)] = coeffs.sigma(t, xi, xh, vi, rg);
            h_base[static_cast<std::size_t>(i)] =
                first.p0(k, i) * coeffs.b(t, xi, xh, vi, rg) + first.p1(k, i) * bhat +
                first.q0(k, i) * sig_base[static_cast<std::size_t>(i)] +
                coeffs.f(t, xi, xh, cost.y(k, i), cost.z(k, i), vi, rg);
        }
    };

    auto delta_of = [&](int k, double v, std::vector<double>& out) {
        prepare_base(k);
        const double t = ens.grid.t(k), xh = ens.xhat[k];
        const int rg = ens.regime(k);
        double bhat_v = 0.0, s2hat = 0.0;
        for (int i = 0; i < N; ++i) {
            double ds = coeffs.sigma(t, ens.x(i, k), xh, v, rg) - sig_base[static_cast<std::size_t>(i)];
            bhat_v += coeffs.b(t, ens.x(i, k), xh, v, rg);
            s2hat += ds * ds;
        }
        bhat_v /= N;
        s2hat /= N;
        for (int i = 0; i < N; ++i) {
            const double xi = ens.x(i, k);
            double sig_v = coeffs.sigma(t, xi, xh, v, rg);
            double ds = sig_v - sig_base[static_cast<std::size_t>(i)];
            double h_v = first.p0(k, i) * coeffs.b(t, xi, xh, v, rg) + first.p1(k, i) * bhat_v +
                         first.q0(k, i) * sig_v +
                         coeffs.f(t, xi, xh, cost.y(k, i), cost.z(k, i) + first.p0(k, i) * ds, v,
                                  rg) +
                         0.5 * second.P0(k, i) * ds * ds + 0.5 * second.P1(k, i) * s2hat;
            out[static_cast<std::size_t>(i)] = h_v - h_base[static_cast<std::size_t>(i)];
        }
    };

    MpReport rep = quantile_check(steps, N, control_grid, quantile, delta_of);
    rep.candidate = "h_function";
    return rep;
}

MpReport check_mp_lq(const LQCoefficients& lq, const ParticleEnsemble& ens,
                     const FirstOrderAdjoint& first, const SecondOrderAdjoint& second,
                     const std::vector<double>& control_grid, double quantile) {
    const int N = ens.N, steps = ens.grid.steps;
    auto delta_of = [&](int k, double v, std::vector<double>& out) {
        const auto& r = lq.at(ens.regime(k));
        double dv_hat = 0.0;
        for (int i = 0; i < N; ++i) dv_hat += v - ens.v(i, k);
        dv_hat /= N;
        for (int i = 0; i < N; ++i) {
            double dv = v - ens.v(i, k);
            out[static_cast<std::size_t>(i)] =
                (first.p0(k, i) * (r.A3 + r.C4 * r.B3) + r.B3 * first.q0(k, i) + r.C5) * dv +
                first.p1(k, i) * r.A3 * dv_hat +
                0.5 * second.P0(k, i) * r.B3 * r.B3 * dv * dv;
        }
    };
    MpReport rep = quantile_check(steps, N, control_grid, quantile, delta_of);
    rep.candidate = "lq_form";
    return rep;
}

namespace {

// odometer over the block/value grid, lexicographically smallest first so
// exact cost ties resolve to the smallest control values
bool advance(std::vector<int>& idx, int base) {
    for (int j = static_cast<int>(idx.size()) - 1; j >= 0; --j) {
        if (++idx[static_cast<std::size_t>(j)] < base) return true;
        idx[static_cast<std::size_t>(j)] = 0;
    }
    return false;
}

} // namespace

BruteForceResult lq_brute_force(const CoefficientSet& coeffs, const ControlSet& set,
                                const NoiseBundle& noise, double x0, const BsdeOptions& opts,
                                const BruteForceConfig& cfg) {
    const std::vector<double> grid = set.grid();
    const int base = static_cast<int>(grid.size());
    const double horizon = noise.grid.horizon;
    BruteForceResult out;

    auto cost_of = [&](const std::vector<double>& blocks) {
        ControlModel m{set, block_policy(blocks, horizon)};
        return solve_cost(coeffs, m, noise, x0, opts).j;
    };

    double total = std::pow(static_cast<double>(base), cfg.blocks);
    if (total <= static_cast<double>(cfg.budget)) {
        out.exhaustive = true;
        std::vector<int> idx(static_cast<std::size_t>(cfg.blocks), 0);
        bool more = true;
        bool first = true;
        while (more) {
            std::vector<double> blocks(static_cast<std::size_t>(cfg.blocks));
            for (int j = 0; j < cfg.blocks; ++j)
                blocks[static_cast<std::size_t>(j)] = grid[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
            double j = cost_of(blocks);
            out.table.emplace_back(blocks, j);
            if (first || j < out.best_cost) {
                out.best_cost = j;
                out.best_blocks = blocks;
                first = false;
            }
            more = advance(idx, base);
        }
        return out;
    }

    // coordinate descent from the mid-grid point
    out.exhaustive = false;
    std::vector<int> idx(static_cast<std::size_t>(cfg.blocks), base / 2);
    std::vector<double> blocks(static_cast<std::size_t>(cfg.blocks));
    auto fill = [&] {
        for (int j = 0; j < cfg.blocks; ++j)
            blocks[static_cast<std::size_t>(j)] = grid[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
    };
    fill();
    double best = cost_of(blocks);
    out.table.emplace_back(blocks, best);
    long evals = 1;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        bool improved = false;
        for (int jb = 0; jb < cfg.blocks; ++jb) {
            int keep = idx[static_cast<std::size_t>(jb)];
            int arg = keep;
            for (int g = 0; g < base; ++g) {
                if (g == keep) continue;
                if (evals >= cfg.budget) {
                    out.budget_exceeded = true;
                    break;
                }
                idx[static_cast<std::size_t>(jb)] = g;
                fill();
                double j = cost_of(blocks);
                ++evals;
                out.table.emplace_back(blocks, j);
                if (j < best - 1e-15 || (j <= best && g < arg)) {
                    best = j;
                    arg = g;
                    improved = true;
                }
            }
            idx[static_cast<std::size_t>(jb)] = arg;
            if (out.budget_exceeded) break;
        }
        if (!improved || out.budget_exceeded) break;
    }
    fill();
    out.best_blocks = blocks;
    out.best_cost = best;
    return out;
}

void write_cost_table_csv(const BruteForceResult& r, std::ostream& os) {
    if (r.table.empty()) return;
    const std::size_t nb = r.table.front().first.size();
    for (std::size_t j = 0; j < nb; ++j) os << "block" << j << ',';
    os << "cost\n";
    for (const auto& [blocks, j] : r.table) {
        for (double b : blocks) os << fmt_double(b) << ',';
        os << fmt_double(j) << '\n';
    }
}

nlohmann::json ConstrainedReport::to_json() const {
    nlohmann::json ladder_json = nlohmann::json::array();
    for (const auto& row : ladder)
        ladder_json.push_back({{"kappa", row.kappa},
                               {"lambda", row.lambda},
                               {"mu", row.mu},
                               {"cost", row.j},
                               {"psi", row.psi},
                               {"blocks", row.blocks}});
    return nlohmann::json{{"ladder", ladder_json},
                          {"lambda", lambda},
                          {"mu", mu},
                          {"norm_error", norm_error},
                          {"multipliers_converged", multipliers_converged},
                          {"candidate_feasible", candidate_feasible},
                          {"candidate_psi", candidate_psi},
                          {"inequality", inequality.to_json()}};
}

ConstrainedReport constrained_verify(const CoefficientSet& coeffs, const ConstraintFn& psi,
                                     const ControlModel& candidate, const GeneratorMatrix& gen,
                                     const TimeGrid& grid, int initial_regime, double x0,
                                     int particles, std::uint64_t seed, const BsdeOptions& opts,
                                     const ConstrainedConfig& cfg) {
    ConstrainedReport rep;
    NoiseBundle noise = make_noise(gen, grid, initial_regime, particles, seed);

    auto psi_mean = [&](const CostResult& cr) {
        const int steps = grid.steps;
        double y0 = cr.solution.y0_mean();
        double acc = 0.0;
        for (int i = 0; i < cr.ensemble.N; ++i)
            acc += psi.psi(cr.ensemble.x(i, steps), cr.ensemble.xhat[steps], y0);
        return acc / cr.ensemble.N;
    };

    CostResult cand = solve_cost(coeffs, candidate, noise, x0, opts);
    const double jbar = cand.j;
    rep.candidate_psi = psi_mean(cand);
    rep.candidate_feasible = std::abs(rep.candidate_psi) <= cfg.feasibility_tol;

    // candidate table over block controls, evaluated once and reused for
    // every kappa (J and E[Psi] do not depend on kappa)
    const std::vector<double> vgrid = candidate.set.grid();
    const int base = static_cast<int>(vgrid.size());
    double total = std::pow(static_cast<double>(base), cfg.search_blocks);
    if (total > 2e5)
        throw std::invalid_argument("constrained_verify: search space too large; reduce blocks "
                                    "or the control grid");
    struct Row {
        std::vector<double> blocks;
        double j, psi;
    };
    std::vector<Row> rows;
    std::vector<int> idx(static_cast<std::size_t>(cfg.search_blocks), 0);
    bool more = true;
    while (more) {
        std::vector<double> blocks(static_cast<std::size_t>(cfg.search_blocks));
        for (int j = 0; j < cfg.search_blocks; ++j)
            blocks[static_cast<std::size_t>(j)] = vgrid[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        ControlModel m{candidate.set, block_policy(blocks, grid.horizon)};
        CostResult cr = solve_cost(coeffs, m, noise, x0, opts);
        rows.push_back({blocks, cr.j, psi_mean(cr)});
        more = advance(idx, base);
    }

    // kappa ladder, descending
    std::vector<double> ladder = cfg.kappa_ladder;
    std::sort(ladder.begin(), ladder.end(), std::greater<double>());
    for (double kappa : ladder) {
        const Row* best = nullptr;
        double best_jk = 0.0;
        for (const auto& row : rows) {
            double a = row.j - jbar + kappa;
            double jk = std::sqrt(a * a + row.psi * row.psi);
            if (!best || jk < best_jk) {
                best = &row;
                best_jk = jk;
            }
        }
        ConstrainedReport::KappaRow kr;
        kr.kappa = kappa;
        kr.j = best->j;
        kr.psi = best->psi;
        kr.blocks = best->blocks;
        kr.lambda = (best->j - jbar + kappa) / best_jk;
        kr.mu = best->psi / best_jk;
        rep.ladder.push_back(kr);
    }

    // multiplier limit: value at the largest kappa whose successor differs
    // by less than the tolerance
    std::size_t sel = rep.ladder.size() - 1;
    rep.multipliers_converged = false;
    for (std::size_t j = 0; j + 1 < rep.ladder.size(); ++j) {
        double dl = rep.ladder[j].lambda - rep.ladder[j + 1].lambda;
        double dm = rep.ladder[j].mu - rep.ladder[j + 1].mu;
        if (std::sqrt(dl * dl + dm * dm) < cfg.multiplier_tol) {
            sel = j;
            rep.multipliers_converged = true;
            break;
        }
    }
    rep.lambda = rep.ladder[sel].lambda;
    rep.mu = rep.ladder[sel].mu;
    rep.norm_error = std::abs(rep.lambda * rep.lambda + rep.mu * rep.mu - 1.0);

    // solve the full bundle at the selected penalized minimizer
    ControlModel vk{candidate.set, block_policy(rep.ladder[sel].blocks, grid.horizon)};
    CostResult ck = solve_cost(coeffs, vk, noise, x0, opts);
    AdjointOptions aopts;
    aopts.bsde = opts;
    FirstOrderAdjoint first = solve_first_order_adjoint(coeffs, ck.ensemble, ck.solution, aopts);
    SecondOrderAdjoint second =
        solve_second_order_adjoint(coeffs, ck.ensemble, ck.solution, first, aopts);

    const ParticleEnsemble& ens = ck.ensemble;
    const int N = ens.N, steps = grid.steps;
    const double y0k = ck.solution.y0_mean();

    // tilde adjoints with UNIT constraint-derivative terminals; the actual
    // terminals are mu times these and the check is linear in (lambda, mu),
    // so solving once at unit scale exposes the multiplier sensitivity
    TrajectoryEval te(coeffs, ens, &ck.solution);
    auto tilde_driver = [&te](int k, int i, const double* y, const double* z, double* o) {
        te.prepare(k);
        o[0] = te.bx[i] * y[0] + te.sx[i] * z[0];
        o[1] = te.bxp[i] * y[0] + (te.bx[i] + te.bxp_hat) * y[1] + te.sxp[i] * z[0];
    };
    auto tilde_terminal = [&](int i, double* o) {
        const double xT = ens.x(i, steps), xh = ens.xhat[steps];
        o[0] = psi.psi_x(xT, xh, y0k);
        o[1] = psi.psi_xp(xT, xh, y0k);
    };
    BackwardSolution tilde_first =
        solve_bsde(ens, 2, tilde_driver, tilde_terminal, opts, [&te](int k) { te.prepare(k); });

    TrajectoryEval te2(coeffs, ens, &ck.solution);
    auto tilde2_driver = [&te2, &tilde_first](int k, int i, const double* y, const double* z,
                                              double* o) {
        te2.prepare(k);
        double sx2 = te2.sx[i] * te2.sx[i];
        o[0] = (2.0 * te2.bx[i] + sx2) * y[0] + 2.0 * te2.sx[i] * z[0] +
               te2.bxx[i] * tilde_first.y(k, i, 0) + te2.sxx[i] * tilde_first.z(k, i, 0);
        o[1] = (2.0 * te2.bx[i] + sx2) * y[1] + te2.bxx[i] * tilde_first.y(k, i, 1);
    };
    auto tilde2_terminal = [&](int i, double* o) {
        o[0] = psi.psi_xx(ens.x(i, steps), ens.xhat[steps], y0k);
        o[1] = 0.0;
    };
    BackwardSolution tilde_second =
        solve_bsde(ens, 2, tilde2_driver, tilde2_terminal, opts, [&te2](int k) { te2.prepare(k); });

    // Upsilon decomposes as (lambda + mu E[Psi_y]) times the (f_y, f_z)
    // exponential factor
    double psy = 0.0;
    for (int i = 0; i < N; ++i) psy += psi.psi_y(ens.x(i, steps), ens.xhat[steps], y0k);
    psy /= N;
    std::vector<double> expf = solve_gamma(coeffs, ens, ck.solution);

    // Monte Carlo error of the multipliers, from the pathwise cost and
    // constraint estimators at the penalized minimizer
    double se_mult;
    {
        const double dt = grid.dt();
        double jm = 0.0, j2 = 0.0, pm = 0.0, p2 = 0.0;
        for (int i = 0; i < N; ++i) {
            double acc = coeffs.phi(ens.x(i, steps), ens.xhat[steps], ens.terminal_regime());
            for (int k = 0; k < steps; ++k)
                acc += coeffs.f(grid.t(k), ens.x(i, k), ens.xhat[k], ck.solution.y(k, i),
                                ck.solution.z(k, i), ens.v(i, k), ens.regime(k)) *
                       dt;
            double pv = psi.psi(ens.x(i, steps), ens.xhat[steps], y0k);
            jm += acc;
            j2 += acc * acc;
            pm += pv;
            p2 += pv * pv;
        }
        jm /= N;
        pm /= N;
        double sj = std::sqrt(std::max(0.0, j2 / N - jm * jm) / N);
        double sp = std::sqrt(std::max(0.0, p2 / N - pm * pm) / N);
        double a = rep.ladder[sel].j - jbar + rep.ladder[sel].kappa;
        double jk = std::sqrt(a * a + rep.ladder[sel].psi * rep.ladder[sel].psi);
        se_mult = (sj + sp) / std::max(jk, 1e-12);
    }

    // pointwise constrained Hamiltonian inequality: Delta = lambda A + mu B
    // with A the Upsilon-weighted unconstrained part and B the tilde part
    // plus E[Psi_y] A. The tolerance carries both the cross-particle spread
    // and the multiplier standard error against |A| + |B|.
    std::vector<double> sig_base(static_cast<std::size_t>(N)), b_base(static_cast<std::size_t>(N));
    int cur_k = -1;
    double bhat_base = 0.0;
    auto prepare_base = [&](int k) {
        if (k == cur_k) return;
        cur_k = k;
        const double t = grid.t(k), xh = ens.xhat[k];
        const int rg = ens.regime(k);
        bhat_base = 0.0;
        for (int i = 0; i < N; ++i) {
            b_base[static_cast<std::size_t>(i)] = coeffs.b(t, ens.x(i, k), xh, ens.v(i, k), rg);
            sig_base[static_cast<std::size_t>(i)] = coeffs.sigma(t, ens.x(i, k), xh, ens.v(i, k), rg);
            bhat_base += b_base[static_cast<std::size_t>(i)];
        }
        bhat_base /= N;
    };

    const double lambda = rep.lambda, mu = rep.mu;
    MpReport ineq;
    ineq.quantile = cfg.quantile;
    long points = 0, violations = 0;
    double worst = 0.0;
    std::vector<double> adelta(static_cast<std::size_t>(N)), bdelta(static_cast<std::size_t>(N));
    for (int k = 0; k < steps; ++k) {
        prepare_base(k);
        const double t = grid.t(k), xh = ens.xhat[k];
        const int rg = ens.regime(k);
        for (double v : vgrid) {
            double bhat_v = 0.0, s2hat = 0.0;
            for (int i = 0; i < N; ++i) {
                double ds = coeffs.sigma(t, ens.x(i, k), xh, v, rg) -
                            sig_base[static_cast<std::size_t>(i)];
                bhat_v += coeffs.b(t, ens.x(i, k), xh, v, rg);
                s2hat += ds * ds;
            }
            bhat_v /= N;
            s2hat /= N;
            double mean = 0.0;
            for (int i = 0; i < N; ++i) {
                const double xi = ens.x(i, k);
                const double g = expf[static_cast<std::size_t>(i) * (steps + 1) + k];
                const double p0 = first.p0(k, i);
                double db = coeffs.b(t, xi, xh, v, rg) - b_base[static_cast<std::size_t>(i)];
                double ds = coeffs.sigma(t, xi, xh, v, rg) - sig_base[static_cast<std::size_t>(i)];
                double a_part =
                    g * (p0 * db + first.q0(k, i) * ds + first.p1(k, i) * (bhat_v - bhat_base) +
                         0.5 * second.P0(k, i) * ds * ds + 0.5 * second.P1(k, i) * s2hat +
                         coeffs.f(t, xi, xh, ck.solution.y(k, i),
                                  ck.solution.z(k, i) + p0 * ds, v, rg) -
                         coeffs.f(t, xi, xh, ck.solution.y(k, i), ck.solution.z(k, i),
                                  ens.v(i, k), rg));
                double tilde_part = tilde_first.y(k, i, 0) * db + tilde_first.z(k, i, 0) * ds +
                                    tilde_first.y(k, i, 1) * (bhat_v - bhat_base) +
                                    0.5 * tilde_second.y(k, i, 0) * ds * ds +
                                    0.5 * tilde_second.y(k, i, 1) * s2hat;
                adelta[static_cast<std::size_t>(i)] = a_part;
                bdelta[static_cast<std::size_t>(i)] = tilde_part + psy * a_part;
                mean += lambda * a_part + mu * bdelta[static_cast<std::size_t>(i)];
            }
            mean /= N;
            double var = 0.0;
            for (int i = 0; i < N; ++i) {
                double d = lambda * adelta[static_cast<std::size_t>(i)] +
                           mu * bdelta[static_cast<std::size_t>(i)] - mean;
                var += d * d;
            }
            var = N > 1 ? var / (N - 1) : 0.0;
            double spread_tol = 3.0 * std::sqrt(var / N);
            for (int i = 0; i < N; ++i) {
                double a = adelta[static_cast<std::size_t>(i)];
                double b = bdelta[static_cast<std::size_t>(i)];
                double d = lambda * a + mu * b;
                double tol = spread_tol + 3.0 * se_mult * (std::abs(a) + std::abs(b)) +
                             1e-12 * (1.0 + std::abs(d));
                ++points;
                if (d < -tol) {
                    ++violations;
                    worst = std::min(worst, d);
                }
            }
        }
    }
    ineq.points = points;
    ineq.violations = violations;
    ineq.violation_fraction = points > 0 ? static_cast<double>(violations) / points : 0.0;
    ineq.worst_violation = worst;
    ineq.pass = ineq.violation_fraction <= cfg.quantile;
    ineq.candidate = vk.policy.describe;
    rep.inequality = ineq;
    return rep;
}

} // namespace mfmp
