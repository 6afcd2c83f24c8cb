#include "mfmp/coefficients.hpp"

#include <algorithm>
#include <cmath>

namespace mfmp {

CoefficientSet lq_to_general(const LQCoefficients& lq) {
    CoefficientSet c;
    c.num_regimes = lq.num_regimes();

    double bound = 0.0;
    for (const auto& r : lq.regimes) {
        for (double v : {r.A0, r.A1, r.A2, r.A3, r.B0, r.B1, r.B2, r.B3, r.C0, r.C1,
                         r.C2, r.C3, r.C4, r.C5, r.D1, r.D2})
            bound = std::max(bound, std::abs(v));
    }
    c.lipschitz_bound = std::max(1.0, 2.0 * bound);
    c.field_adapted = true; // A1, B1 depend on the regime only

    c.b = [lq](double, double x, double xp, double v, int i) {
        const auto& r = lq.at(i);
        return r.A0 + r.A1 * x + r.A2 * xp + r.A3 * v;
    };
    c.sigma = [lq](double, double x, double xp, double v, int i) {
        const auto& r = lq.at(i);
        return r.B0 + r.B1 * x + r.B2 * xp + r.B3 * v;
    };
    c.b_x = [lq](double, double, double, double, int i) { return lq.at(i).A1; };
    c.b_xp = [lq](double, double, double, double, int i) { return lq.at(i).A2; };
    c.sigma_x = [lq](double, double, double, double, int i) { return lq.at(i).B1; };
    c.sigma_xp = [lq](double, double, double, double, int i) { return lq.at(i).B2; };
    auto zero_d = [](double, double, double, double, int) { return 0.0; };
    c.b_xx = zero_d;
    c.b_xxp = zero_d;
    c.b_xpxp = zero_d;
    c.sigma_xx = zero_d;
    c.sigma_xxp = zero_d;
    c.sigma_xpxp = zero_d;

    c.f = [lq](double, double x, double xp, double y, double z, double v, int i) {
        const auto& r = lq.at(i);
        return r.C0 + r.C1 * x + r.C2 * xp + r.C3 * y + r.C4 * z + r.C5 * v;
    };
    c.f_x = [lq](double, double, double, double, double, double, int i) { return lq.at(i).C1; };
    c.f_xp = [lq](double, double, double, double, double, double, int i) { return lq.at(i).C2; };
    c.f_y = [lq](double, double, double, double, double, double, int i) { return lq.at(i).C3; };
    c.f_z = [lq](double, double, double, double, double, double, int i) { return lq.at(i).C4; };
    c.f_hess = [](double, double, double, double, double, double, int) {
        return std::array<double, 16>{};
    };

    c.phi = [lq](double x, double xp, int i) {
        const auto& r = lq.at(i);
        return r.D1 * x * x + r.D2 * xp * xp;
    };
    c.phi_x = [lq](double x, double, int i) { return 2.0 * lq.at(i).D1 * x; };
    c.phi_xp = [lq](double, double xp, int i) { return 2.0 * lq.at(i).D2 * xp; };
    c.phi_xx = [lq](double, double, int i) { return 2.0 * lq.at(i).D1; };
    c.phi_xxp = [](double, double, int) { return 0.0; };
    c.phi_xpxp = [lq](double, double, int i) { return 2.0 * lq.at(i).D2; };
    return c;
}

namespace {
double sech2(double x) {
    double c = std::cosh(x);
    return 1.0 / (c * c);
}
// d/dx sech^2(x) = -2 sech^2(x) tanh(x)
double dsech2(double x) { return -2.0 * sech2(x) * std::tanh(x); }
} // namespace

CoefficientSet tanh_family(const std::vector<TanhRegime>& regimes) {
    CoefficientSet c;
    c.num_regimes = static_cast<int>(regimes.size());

    double bound = 0.0;
    for (const auto& r : regimes) {
        for (double v : {r.a0, r.a1, r.a2, r.a3, r.s0, r.s1, r.s2, r.s3, r.c0, r.c1,
                         r.c2, r.c3, r.c4, r.c5, r.c6, r.d1, r.d2})
            bound = std::max(bound, std::abs(v));
    }
    c.lipschitz_bound = std::max(1.0, 4.0 * bound);
    c.field_adapted = false;

    auto at = [regimes](int i) -> const TanhRegime& {
        if (i < 1 || i > static_cast<int>(regimes.size()))
            throw std::invalid_argument("regime index out of range");
        return regimes[i - 1];
    };

    c.b = [at](double, double x, double xp, double v, int i) {
        const auto& r = at(i);
        return r.a0 + r.a1 * std::tanh(x) + r.a2 * std::tanh(xp) + r.a3 * v;
    };
    c.sigma = [at](double, double x, double xp, double v, int i) {
        const auto& r = at(i);
        return r.s0 + r.s1 * std::tanh(x) + r.s2 * std::tanh(xp) + r.s3 * v;
    };
    c.b_x = [at](double, double x, double, double, int i) { return at(i).a1 * sech2(x); };
    c.b_xp = [at](double, double, double xp, double, int i) { return at(i).a2 * sech2(xp); };
    c.sigma_x = [at](double, double x, double, double, int i) { return at(i).s1 * sech2(x); };
    c.sigma_xp = [at](double, double, double xp, double, int i) { return at(i).s2 * sech2(xp); };
    c.b_xx = [at](double, double x, double, double, int i) { return at(i).a1 * dsech2(x); };
    c.b_xxp = [](double, double, double, double, int) { return 0.0; };
    c.b_xpxp = [at](double, double, double xp, double, int i) { return at(i).a2 * dsech2(xp); };
    c.sigma_xx = [at](double, double x, double, double, int i) { return at(i).s1 * dsech2(x); };
    c.sigma_xxp = [](double, double, double, double, int) { return 0.0; };
    c.sigma_xpxp = [at](double, double, double xp, double, int i) { return at(i).s2 * dsech2(xp); };

    c.f = [at](double, double x, double xp, double y, double z, double v, int i) {
        const auto& r = at(i);
        return r.c0 + r.c1 * std::tanh(x) + r.c2 * std::tanh(xp) + r.c3 * std::sin(y) +
               r.c4 * std::sin(z) + r.c5 * v + r.c6 * std::sin(y) * std::tanh(x);
    };
    c.f_x = [at](double, double x, double, double y, double, double, int i) {
        const auto& r = at(i);
        return (r.c1 + r.c6 * std::sin(y)) * sech2(x);
    };
    c.f_xp = [at](double, double, double xp, double, double, double, int i) {
        return at(i).c2 * sech2(xp);
    };
    c.f_y = [at](double, double x, double, double y, double, double, int i) {
        const auto& r = at(i);
        return (r.c3 + r.c6 * std::tanh(x)) * std::cos(y);
    };
    c.f_z = [at](double, double, double, double, double z, double, int i) {
        return at(i).c4 * std::cos(z);
    };
    c.f_hess = [at](double, double x, double xp, double y, double z, double, int i) {
        const auto& r = at(i);
        std::array<double, 16> h{}; // order (x, x', y, z)
        h[0 * 4 + 0] = (r.c1 + r.c6 * std::sin(y)) * dsech2(x);
        h[1 * 4 + 1] = r.c2 * dsech2(xp);
        h[0 * 4 + 2] = r.c6 * std::cos(y) * sech2(x);
        h[2 * 4 + 0] = h[0 * 4 + 2];
        h[2 * 4 + 2] = -(r.c3 + r.c6 * std::tanh(x)) * std::sin(y);
        h[3 * 4 + 3] = -r.c4 * std::sin(z);
        return h;
    };

    c.phi = [at](double x, double xp, int i) {
        const auto& r = at(i);
        return r.d1 * x * x + r.d2 * xp * xp;
    };
    c.phi_x = [at](double x, double, int i) { return 2.0 * at(i).d1 * x; };
    c.phi_xp = [at](double, double xp, int i) { return 2.0 * at(i).d2 * xp; };
    c.phi_xx = [at](double, double, int i) { return 2.0 * at(i).d1; };
    c.phi_xxp = [](double, double, int) { return 0.0; };
    c.phi_xpxp = [at](double, double, int i) { return 2.0 * at(i).d2; };
    return c;
}

} // namespace mfmp
