#include "mfmp/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfmp {

bool ControlSet::contains(double v, double tol) const {
    if (finite) {
        for (double w : values)
            if (std::abs(v - w) <= tol) return true;
        return false;
    }
    return v >= lo - tol && v <= hi + tol;
}

double ControlSet::clamp(double v) const {
    if (!finite) return std::min(hi, std::max(lo, v));
    double best = values.front();
    for (double w : values)
        if (std::abs(v - w) < std::abs(v - best)) best = w;
    return best;
}

std::vector<double> ControlSet::grid() const {
    if (finite) return values;
    std::vector<double> g(grid_points);
    for (int j = 0; j < grid_points; ++j)
        g[j] = grid_points == 1 ? lo : lo + (hi - lo) * j / (grid_points - 1);
    return g;
}

double ControlSet::min_value() const { return finite ? values.front() : lo; }
double ControlSet::max_value() const { return finite ? values.back() : hi; }

Policy constant_policy(double v) {
    return {[v](double, double, double, int) { return v; }, "constant(" + std::to_string(v) + ")"};
}

Policy block_policy(std::vector<double> values, double horizon) {
    if (values.empty()) throw std::invalid_argument("block policy needs at least one block");
    int n = static_cast<int>(values.size());
    auto fn = [values, horizon, n](double t, double, double, int) {
        int k = static_cast<int>(std::floor(t / horizon * n));
        k = std::min(n - 1, std::max(0, k));
        return values[static_cast<std::size_t>(k)];
    };
    std::string d = "blocks(";
    for (int j = 0; j < n; ++j) d += (j ? "," : "") + std::to_string(values[j]);
    return {fn, d + ")"};
}

Policy affine_policy(double k0, double kx, double kxp, ControlSet set) {
    auto fn = [k0, kx, kxp, set](double, double x, double xhat, int) {
        return set.clamp(k0 + kx * x + kxp * xhat);
    };
    return {fn, "affine"};
}

double SpikeSpec::measure() const {
    double m = 0.0;
    for (const auto& [a, b] : windows) m += b - a;
    return m;
}

std::vector<char> SpikeSpec::step_mask(const TimeGrid& grid) const {
    std::vector<char> mask(grid.steps, 0);
    const double dt = grid.dt();
    for (const auto& [a, b] : windows) {
        if (b <= a) throw std::invalid_argument("spike window has nonpositive length");
        if (a < 0.0 || b > grid.horizon + 1e-12)
            throw std::invalid_argument("spike window outside [0, horizon]");
        double ka = a / dt, kb = b / dt;
        long ia = std::lround(ka), ib = std::lround(kb);
        if (std::abs(ka - ia) > 1e-9 || std::abs(kb - ib) > 1e-9)
            throw std::invalid_argument("spike window not aligned to the time grid");
        for (long k = ia; k < ib; ++k) mask[static_cast<std::size_t>(k)] = 1;
    }
    return mask;
}

ControlModel spike_overlay(const ControlModel& base, const ControlModel& alt,
                           const SpikeSpec& spike, const TimeGrid& grid) {
    if (spike.windows.empty()) return base;
    auto mask = spike.step_mask(grid); // validates alignment
    double dt = grid.dt();
    int steps = grid.steps;
    PolicyFn basef = base.policy.eval, altf = alt.policy.eval;
    auto fn = [mask, dt, steps, basef, altf](double t, double x, double xhat, int regime) {
        int k = static_cast<int>(std::lround(t / dt));
        k = std::min(steps - 1, std::max(0, k));
        return mask[static_cast<std::size_t>(k)] ? altf(t, x, xhat, regime)
                                                 : basef(t, x, xhat, regime);
    };
    ControlModel out;
    out.set = base.set;
    out.policy = {fn, "spike(" + base.policy.describe + "->" + alt.policy.describe + ")"};
    return out;
}

} // namespace mfmp
