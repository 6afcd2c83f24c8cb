#ifndef MFMP_CONTROL_HPP
#define MFMP_CONTROL_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfmp/grid.hpp"

namespace mfmp {

// Control set V: either a finite list of values or an interval that is
// discretized to `grid_points` values wherever a pointwise-in-v scan runs.
struct ControlSet {
    bool finite = true;
    std::vector<double> values; // finite case, sorted
    double lo = 0.0, hi = 0.0;  // interval case
    int grid_points = 101;

    bool contains(double v, double tol = 1e-9) const;
    double clamp(double v) const;
    std::vector<double> grid() const;
    double min_value() const;
    double max_value() const;
};

using PolicyFn = std::function<double(double t, double x, double xhat, int regime)>;

// Feedback policy; open-loop controls are recovered by evaluating along
// simulated states. The description string is carried into reports.
struct Policy {
    PolicyFn eval;
    std::string describe;
};

Policy constant_policy(double v);
// piecewise-constant in time, blocks of equal length over [0, horizon]
Policy block_policy(std::vector<double> values, double horizon);
// k0 + kx x + kxp x', clamped to the control set
Policy affine_policy(double k0, double kx, double kxp, ControlSet set);

struct ControlModel {
    ControlSet set;
    Policy policy;
};

// Spike window E_eps: a union of half-open intervals [a, b) whose endpoints
// must sit on grid nodes, so |E_eps| is exact on the grid.
struct SpikeSpec {
    std::vector<std::pair<double, double>> windows;
    std::vector<double> ladder{0.2, 0.1, 0.05, 0.025, 0.0125};

    double measure() const;
    // one flag per step; throws std::invalid_argument if not grid-aligned
    std::vector<char> step_mask(const TimeGrid& grid) const;

    static SpikeSpec single(double t0, double eps) {
        SpikeSpec s;
        s.windows = {{t0, t0 + eps}};
        return s;
    }
};

// v^eps: alt on the window, base elsewhere. Empty window returns base.
ControlModel spike_overlay(const ControlModel& base, const ControlModel& alt,
                           const SpikeSpec& spike, const TimeGrid& grid);

} // namespace mfmp

#endif
