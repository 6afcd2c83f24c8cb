#include "mfmp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mfmp/report.hpp"
#include "mfmp/rng.hpp"

namespace mfmp {

namespace {

double require_num(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number())
        throw ConfigError("missing or non-numeric field: " + key);
    return j[key].get<double>();
}

double opt_num(const nlohmann::json& j, const std::string& key, double dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number()) throw ConfigError("non-numeric field: " + key);
    return j[key].get<double>();
}

ControlSet parse_set(const nlohmann::json& j) {
    ControlSet s;
    std::string type = j.value("type", "");
    if (type == "finite") {
        s.finite = true;
        if (!j.contains("values") || !j["values"].is_array() || j["values"].empty())
            throw ConfigError("control set: finite type needs a nonempty values array");
        for (const auto& v : j["values"]) s.values.push_back(v.get<double>());
        std::sort(s.values.begin(), s.values.end());
    } else if (type == "interval") {
        s.finite = false;
        s.lo = require_num(j, "min");
        s.hi = require_num(j, "max");
        if (s.hi <= s.lo) throw ConfigError("control set: max must exceed min");
        s.grid_points = static_cast<int>(opt_num(j, "points", 101));
        if (s.grid_points < 2) throw ConfigError("control set: points must be >= 2");
    } else {
        throw ConfigError("control set: type must be finite or interval");
    }
    return s;
}

Policy parse_policy(const nlohmann::json& j, const ControlSet& set, double horizon) {
    std::string type = j.value("type", "");
    if (type == "constant") return constant_policy(require_num(j, "value"));
    if (type == "blocks") {
        std::vector<double> vals;
        for (const auto& v : j.at("values")) vals.push_back(v.get<double>());
        return block_policy(vals, horizon);
    }
    if (type == "affine")
        return affine_policy(opt_num(j, "k0", 0.0), opt_num(j, "kx", 0.0),
                             opt_num(j, "kxp", 0.0), set);
    throw ConfigError("policy: type must be constant, blocks or affine");
}

LQRegime parse_lq_regime(const nlohmann::json& j) {
    LQRegime r;
    r.A0 = opt_num(j, "A0", 0);
    r.A1 = opt_num(j, "A1", 0);
    r.A2 = opt_num(j, "A2", 0);
    r.A3 = opt_num(j, "A3", 0);
    r.B0 = opt_num(j, "B0", 0);
    r.B1 = opt_num(j, "B1", 0);
    r.B2 = opt_num(j, "B2", 0);
    r.B3 = opt_num(j, "B3", 0);
    r.C0 = opt_num(j, "C0", 0);
    r.C1 = opt_num(j, "C1", 0);
    r.C2 = opt_num(j, "C2", 0);
    r.C3 = opt_num(j, "C3", 0);
    r.C4 = opt_num(j, "C4", 0);
    r.C5 = opt_num(j, "C5", 0);
    r.D1 = opt_num(j, "D1", 0);
    r.D2 = opt_num(j, "D2", 0);
    return r;
}

TanhRegime parse_tanh_regime(const nlohmann::json& j) {
    TanhRegime r;
    r.a0 = opt_num(j, "a0", 0);
    r.a1 = opt_num(j, "a1", 0);
    r.a2 = opt_num(j, "a2", 0);
    r.a3 = opt_num(j, "a3", 0);
    r.s0 = opt_num(j, "s0", 0);
    r.s1 = opt_num(j, "s1", 0);
    r.s2 = opt_num(j, "s2", 0);
    r.s3 = opt_num(j, "s3", 0);
    r.c0 = opt_num(j, "c0", 0);
    r.c1 = opt_num(j, "c1", 0);
    r.c2 = opt_num(j, "c2", 0);
    r.c3 = opt_num(j, "c3", 0);
    r.c4 = opt_num(j, "c4", 0);
    r.c5 = opt_num(j, "c5", 0);
    r.c6 = opt_num(j, "c6", 0);
    r.d1 = opt_num(j, "d1", 0);
    r.d2 = opt_num(j, "d2", 0);
    return r;
}

} // namespace

Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    try {
        s.grid.horizon = require_num(j, "horizon");
        s.grid.steps = static_cast<int>(require_num(j, "steps"));
        s.grid.validate();
        s.x0 = opt_num(j, "x0", 0.0);
        s.particles = static_cast<int>(opt_num(j, "particles", 1000));
        s.chains = static_cast<int>(opt_num(j, "chains", 1));
        s.seed = static_cast<std::uint64_t>(opt_num(j, "seed", 1));

        const auto& g = j.at("generator");
        s.gen.size = static_cast<int>(g.size());
        for (const auto& row : g)
            for (const auto& v : row) s.gen.rates.push_back(v.get<double>());
        s.gen.validate();
        s.initial_regime = static_cast<int>(opt_num(j, "initial_regime", 1));
        if (s.initial_regime < 1 || s.initial_regime > s.gen.size)
            throw ConfigError("initial_regime out of range");

        const auto& cj = j.at("coefficients");
        std::string family = cj.value("family", "lq");
        if (family == "lq") {
            s.is_lq = true;
            for (const auto& r : cj.at("regimes")) s.lq.regimes.push_back(parse_lq_regime(r));
            if (s.lq.num_regimes() != s.gen.size)
                throw ConfigError("coefficients: one regime entry per generator row required");
            s.coeffs = lq_to_general(s.lq);
        } else if (family == "tanh") {
            std::vector<TanhRegime> regimes;
            for (const auto& r : cj.at("regimes")) regimes.push_back(parse_tanh_regime(r));
            if (static_cast<int>(regimes.size()) != s.gen.size)
                throw ConfigError("coefficients: one regime entry per generator row required");
            s.coeffs = tanh_family(regimes);
        } else {
            throw ConfigError("coefficients: unknown family " + family);
        }

        const auto& ctrl = j.at("control");
        s.base.set = parse_set(ctrl.at("set"));
        s.base.policy = parse_policy(ctrl.at("base"), s.base.set, s.grid.horizon);
        s.alt.set = s.base.set;
        if (ctrl.contains("alt"))
            s.alt.policy = parse_policy(ctrl["alt"], s.alt.set, s.grid.horizon);
        else
            s.alt.policy = s.base.policy;

        if (j.contains("spike")) {
            const auto& sp = j["spike"];
            s.spike_t0 = opt_num(sp, "t0", 0.0);
            double eps = opt_num(sp, "epsilon", 0.05);
            if (sp.contains("windows")) {
                // arbitrary grid-aligned union of [a, b) intervals
                s.spike.windows.clear();
                for (const auto& w : sp["windows"]) {
                    if (!w.is_array() || w.size() != 2)
                        throw ConfigError("spike: each window must be a [start, end] pair");
                    s.spike.windows.emplace_back(w[0].get<double>(), w[1].get<double>());
                }
                s.spike.step_mask(s.grid); // validates alignment
                s.spike_t0 = s.spike.windows.front().first;
            } else {
                s.spike = SpikeSpec::single(s.spike_t0, eps);
            }
            if (sp.contains("ladder")) {
                s.spike.ladder.clear();
                for (const auto& v : sp["ladder"]) s.spike.ladder.push_back(v.get<double>());
            }
        }

        if (j.contains("basis")) {
            const auto& b = j["basis"];
            s.bsde.basis.x_degree = static_cast<int>(opt_num(b, "x_degree", 3));
            s.bsde.basis.xhat_degree = static_cast<int>(opt_num(b, "xhat_degree", 2));
            s.bsde.basis.interaction = b.value("interaction", true);
            s.bsde.basis.regime_intercepts = b.value("regime_intercepts", true);
            s.bsde.basis.ridge = opt_num(b, "ridge", 1e-8);
        }
        s.bsde.picard = static_cast<int>(opt_num(j, "picard", 2));
        s.clip_q = j.value("clip_q", false);

        if (j.contains("mp")) {
            const auto& m = j["mp"];
            s.mp_quantile = opt_num(m, "quantile", 0.01);
            s.brute.blocks = static_cast<int>(opt_num(m, "blocks", 2));
            s.brute.budget = static_cast<long>(opt_num(m, "budget", 100000));
        }
        if (j.contains("rate")) {
            s.rate.reps = static_cast<int>(opt_num(j["rate"], "reps", 2));
            s.rate.eps_ref = opt_num(j["rate"], "eps_ref", 0.05);
            s.rate.beta = opt_num(j["rate"], "beta", 2.0);
            if (s.rate.beta < 2.0 || s.rate.beta > 8.0)
                throw ConfigError("rate: beta must lie in [2, 8]");
        }
        if (j.contains("validate_box")) {
            const auto& b = j["validate_box"];
            if (b.contains("x")) {
                s.box.x_lo = b["x"][0].get<double>();
                s.box.x_hi = b["x"][1].get<double>();
            }
            if (b.contains("y")) {
                s.box.y_lo = b["y"][0].get<double>();
                s.box.y_hi = b["y"][1].get<double>();
            }
            if (b.contains("z")) {
                s.box.z_lo = b["z"][0].get<double>();
                s.box.z_hi = b["z"][1].get<double>();
            }
            s.box.budget = static_cast<int>(opt_num(b, "budget", 2000));
        }

        if (j.contains("constraint")) {
            const auto& cc = j["constraint"];
            std::string fam = cc.value("family", "none");
            ConstraintFn fn;
            if (fam == "mean_target") {
                double c = require_num(cc, "c");
                fn.psi = [c](double x, double, double) { return x - c; };
                fn.psi_x = [](double, double, double) { return 1.0; };
                fn.psi_xp = [](double, double, double) { return 0.0; };
                fn.psi_y = [](double, double, double) { return 0.0; };
                fn.psi_xx = [](double, double, double) { return 0.0; };
            } else if (fam == "xhat_target") {
                double c = require_num(cc, "c");
                fn.psi = [c](double, double xp, double) { return xp - c; };
                fn.psi_x = [](double, double, double) { return 0.0; };
                fn.psi_xp = [](double, double, double) { return 1.0; };
                fn.psi_y = [](double, double, double) { return 0.0; };
                fn.psi_xx = [](double, double, double) { return 0.0; };
            } else if (fam == "none") {
                fn.psi = [](double, double, double) { return 0.0; };
                fn.psi_x = fn.psi_xp = fn.psi_y = fn.psi_xx =
                    [](double, double, double) { return 0.0; };
            } else {
                throw ConfigError("constraint: unknown family " + fam);
            }
            s.constraint = fn;
            if (cc.contains("kappa_ladder")) {
                s.constrained.kappa_ladder.clear();
                for (const auto& v : cc["kappa_ladder"])
                    s.constrained.kappa_ladder.push_back(v.get<double>());
            }
            s.constrained.multiplier_tol = opt_num(cc, "multiplier_tol", 1e-2);
            s.constrained.feasibility_tol = opt_num(cc, "feasibility_tol", 0.05);
            s.constrained.search_blocks = static_cast<int>(opt_num(cc, "search_blocks", 1));
            s.constrained.quantile = opt_num(cc, "quantile", 0.01);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    s.raw = j;
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario parse error: ") + e.what());
    }
    return scenario_from_json(j);
}

// ---- assumption checks ----------------------------------------------------

bool AssumptionReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

nlohmann::json AssumptionReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks)
        arr.push_back({{"name", c.name},
                       {"pass", c.pass},
                       {"worst_ratio", c.worst},
                       {"witness", c.witness}});
    return nlohmann::json{{"checks", arr}, {"all_pass", all_pass()}};
}

namespace {

struct SamplePoint {
    double t, x, xp, y, z, v;
    int regime;
};

std::string witness_str(const SamplePoint& p) {
    return "t=" + fmt_double(p.t) + " x=" + fmt_double(p.x) + " x'=" + fmt_double(p.xp) +
           " y=" + fmt_double(p.y) + " z=" + fmt_double(p.z) + " v=" + fmt_double(p.v) +
           " i=" + std::to_string(p.regime);
}

} // namespace

AssumptionReport check_assumptions(const CoefficientSet& coeffs, const ValidationBox& box,
                                   int budget, std::uint64_t seed) {
    if (budget < 1000) budget = 1000;
    Rng rng = make_stream(seed, "assumptions");
    const double L = coeffs.lipschitz_bound;

    std::vector<SamplePoint> pts(static_cast<std::size_t>(budget));
    auto unif = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.next_uniform(); };
    for (auto& p : pts) {
        p.t = unif(0.0, 1.0);
        p.x = unif(box.x_lo, box.x_hi);
        p.xp = unif(box.x_lo, box.x_hi);
        p.y = unif(box.y_lo, box.y_hi);
        p.z = unif(box.z_lo, box.z_hi);
        p.v = unif(-1.0, 1.0);
        p.regime = 1 + static_cast<int>(rng.next_u64() % coeffs.num_regimes);
    }

    AssumptionReport rep;
    const double h1 = 1e-5, h2 = 5e-4;
    auto fd_tol = [](double ref) { return 1e-5 * std::max(1.0, std::abs(ref)); };

    // first derivatives of b and sigma against central differences
    auto drift_deriv_check = [&](const std::string& name, const DriftFn& fn, const DriftFn& d,
                                 bool wrt_x) {
        AssumptionCheck c{name, true, 0.0, ""};
        for (const auto& p : pts) {
            double xp_p = wrt_x ? p.xp : p.xp + h1, xp_m = wrt_x ? p.xp : p.xp - h1;
            double x_p = wrt_x ? p.x + h1 : p.x, x_m = wrt_x ? p.x - h1 : p.x;
            double fd = (fn(p.t, x_p, xp_p, p.v, p.regime) - fn(p.t, x_m, xp_m, p.v, p.regime)) /
                        (2 * h1);
            double an = d(p.t, p.x, p.xp, p.v, p.regime);
            double ratio = std::abs(fd - an) / fd_tol(an);
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    };
    drift_deriv_check("b_x matches finite difference", coeffs.b, coeffs.b_x, true);
    drift_deriv_check("b_x' matches finite difference", coeffs.b, coeffs.b_xp, false);
    drift_deriv_check("sigma_x matches finite difference", coeffs.sigma, coeffs.sigma_x, true);
    drift_deriv_check("sigma_x' matches finite difference", coeffs.sigma, coeffs.sigma_xp, false);

    // second derivatives of b and sigma
    auto drift_second_check = [&](const std::string& name, const DriftFn& fn, const DriftFn& d) {
        AssumptionCheck c{name, true, 0.0, ""};
        for (const auto& p : pts) {
            double fd = (fn(p.t, p.x + h2, p.xp, p.v, p.regime) -
                         2 * fn(p.t, p.x, p.xp, p.v, p.regime) +
                         fn(p.t, p.x - h2, p.xp, p.v, p.regime)) /
                        (h2 * h2);
            double an = d(p.t, p.x, p.xp, p.v, p.regime);
            double ratio = std::abs(fd - an) / std::max(1e-4, fd_tol(an));
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    };
    drift_second_check("b_xx matches finite difference", coeffs.b, coeffs.b_xx);
    drift_second_check("sigma_xx matches finite difference", coeffs.sigma, coeffs.sigma_xx);

    // first derivatives of f
    struct FDeriv {
        std::string name;
        int arg; // 0=x 1=xp 2=y 3=z
        const DriverFnF* d;
    };
    const std::vector<FDeriv> fderivs = {{"f_x matches finite difference", 0, &coeffs.f_x},
                                         {"f_x' matches finite difference", 1, &coeffs.f_xp},
                                         {"f_y matches finite difference", 2, &coeffs.f_y},
                                         {"f_z matches finite difference", 3, &coeffs.f_z}};
    for (const auto& fd : fderivs) {
        AssumptionCheck c{fd.name, true, 0.0, ""};
        for (const auto& p : pts) {
            double a[4] = {p.x, p.xp, p.y, p.z};
            double save = a[fd.arg];
            a[fd.arg] = save + h1;
            double up = coeffs.f(p.t, a[0], a[1], a[2], a[3], p.v, p.regime);
            a[fd.arg] = save - h1;
            double dn = coeffs.f(p.t, a[0], a[1], a[2], a[3], p.v, p.regime);
            a[fd.arg] = save;
            double fdv = (up - dn) / (2 * h1);
            double an = (*fd.d)(p.t, p.x, p.xp, p.y, p.z, p.v, p.regime);
            double ratio = std::abs(fdv - an) / fd_tol(an);
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    }

    // f Hessian against central second differences
    {
        AssumptionCheck c{"f Hessian matches finite differences", true, 0.0, ""};
        for (int n = 0; n < std::min(budget, 400); ++n) {
            const auto& p = pts[static_cast<std::size_t>(n)];
            auto feval = [&](double dx, double dxp, double dy, double dz) {
                return coeffs.f(p.t, p.x + dx, p.xp + dxp, p.y + dy, p.z + dz, p.v, p.regime);
            };
            auto h = coeffs.f_hess(p.t, p.x, p.xp, p.y, p.z, p.v, p.regime);
            for (int a = 0; a < 4; ++a)
                for (int b = a; b < 4; ++b) {
                    double da[4] = {0, 0, 0, 0}, db[4] = {0, 0, 0, 0};
                    da[a] = h2;
                    db[b] = h2;
                    double fd;
                    if (a == b) {
                        fd = (feval(2 * da[0], 2 * da[1], 2 * da[2], 2 * da[3]) -
                              2 * feval(da[0], da[1], da[2], da[3]) + feval(0, 0, 0, 0)) /
                             (h2 * h2);
                    } else {
                        fd = (feval(da[0] + db[0], da[1] + db[1], da[2] + db[2], da[3] + db[3]) -
                              feval(da[0] - db[0], da[1] - db[1], da[2] - db[2], da[3] - db[3]) -
                              feval(db[0] - da[0], db[1] - da[1], db[2] - da[2], db[3] - da[3]) +
                              feval(-da[0] - db[0], -da[1] - db[1], -da[2] - db[2],
                                    -da[3] - db[3])) /
                             (4 * h2 * h2);
                    }
                    double an = h[static_cast<std::size_t>(a * 4 + b)];
                    double ratio = std::abs(fd - an) / std::max(1e-3, fd_tol(an));
                    if (ratio > c.worst) {
                        c.worst = ratio;
                        c.witness = witness_str(p);
                    }
                }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    }

    // terminal derivatives
    {
        AssumptionCheck c{"Phi derivatives match finite differences", true, 0.0, ""};
        for (const auto& p : pts) {
            double fdx = (coeffs.phi(p.x + h1, p.xp, p.regime) -
                          coeffs.phi(p.x - h1, p.xp, p.regime)) /
                         (2 * h1);
            double fdxp = (coeffs.phi(p.x, p.xp + h1, p.regime) -
                           coeffs.phi(p.x, p.xp - h1, p.regime)) /
                          (2 * h1);
            double r1 = std::abs(fdx - coeffs.phi_x(p.x, p.xp, p.regime)) /
                        fd_tol(coeffs.phi_x(p.x, p.xp, p.regime));
            double r2 = std::abs(fdxp - coeffs.phi_xp(p.x, p.xp, p.regime)) /
                        fd_tol(coeffs.phi_xp(p.x, p.xp, p.regime));
            double ratio = std::max(r1, r2);
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    }

    // Lipschitz ratios of b, sigma in (x, x')
    auto lipschitz_check = [&](const std::string& name, const DriftFn& fn) {
        AssumptionCheck c{name, true, 0.0, ""};
        for (std::size_t n = 0; n + 1 < pts.size(); n += 2) {
            const auto& p = pts[n];
            const auto& q = pts[n + 1];
            double dist = std::abs(p.x - q.x) + std::abs(p.xp - q.xp);
            if (dist < 1e-8) continue;
            double diff = std::abs(fn(p.t, p.x, p.xp, p.v, p.regime) -
                                   fn(p.t, q.x, q.xp, p.v, p.regime));
            double ratio = diff / (L * dist);
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p) + " vs x=" + fmt_double(q.x) + " x'=" + fmt_double(q.xp);
            }
        }
        c.pass = c.worst <= 1.0 + 1e-9;
        rep.checks.push_back(c);
    };
    lipschitz_check("b Lipschitz in (x, x') with constant L", coeffs.b);
    lipschitz_check("sigma Lipschitz in (x, x') with constant L", coeffs.sigma);

    // second-derivative bounds by L
    {
        AssumptionCheck c{"second derivatives bounded by L", true, 0.0, ""};
        for (const auto& p : pts) {
            double worst = 0.0;
            for (const DriftFn* d : {&coeffs.b_xx, &coeffs.b_xxp, &coeffs.b_xpxp,
                                     &coeffs.sigma_xx, &coeffs.sigma_xxp, &coeffs.sigma_xpxp})
                worst = std::max(worst, std::abs((*d)(p.t, p.x, p.xp, p.v, p.regime)));
            auto h = coeffs.f_hess(p.t, p.x, p.xp, p.y, p.z, p.v, p.regime);
            for (double e : h) worst = std::max(worst, std::abs(e));
            for (const TerminalFnPhi* d : {&coeffs.phi_xx, &coeffs.phi_xxp, &coeffs.phi_xpxp})
                worst = std::max(worst, std::abs((*d)(p.x, p.xp, p.regime)));
            double ratio = worst / L;
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0 + 1e-9;
        rep.checks.push_back(c);
    }

    // field-adapted: b_x, sigma_x, b_xx independent of (x, x', v)
    if (coeffs.field_adapted) {
        AssumptionCheck c{"b_x, sigma_x, b_xx depend on (t, regime) only", true, 0.0, ""};
        for (std::size_t n = 0; n + 1 < pts.size(); n += 2) {
            SamplePoint p = pts[n], q = pts[n + 1];
            q.t = p.t;
            q.regime = p.regime;
            double worst = 0.0;
            for (const DriftFn* d : {&coeffs.b_x, &coeffs.sigma_x, &coeffs.b_xx}) {
                double a = (*d)(p.t, p.x, p.xp, p.v, p.regime);
                double b = (*d)(q.t, q.x, q.xp, q.v, q.regime);
                worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
            }
            double ratio = worst / 1e-12;
            if (ratio > c.worst) {
                c.worst = ratio;
                c.witness = witness_str(p);
            }
        }
        c.pass = c.worst <= 1.0;
        rep.checks.push_back(c);
    }

    return rep;
}

AssumptionCheck check_policy(const ControlModel& model, const ValidationBox& box, int budget,
                             std::uint64_t seed, int num_regimes) {
    AssumptionCheck c{"policy evaluations lie in the control set", true, 0.0, ""};
    Rng rng = make_stream(seed, "policy");
    for (int n = 0; n < budget; ++n) {
        double t = rng.next_uniform();
        double x = box.x_lo + (box.x_hi - box.x_lo) * rng.next_uniform();
        double xp = box.x_lo + (box.x_hi - box.x_lo) * rng.next_uniform();
        int regime = 1 + static_cast<int>(rng.next_u64() % num_regimes);
        double v = model.policy.eval(t, x, xp, regime);
        if (!model.set.contains(v)) {
            c.pass = false;
            c.worst = std::max(c.worst, 1.0);
            c.witness = "v=" + fmt_double(v) + " at t=" + fmt_double(t) + " x=" + fmt_double(x);
        }
    }
    return c;
}

} // namespace mfmp
