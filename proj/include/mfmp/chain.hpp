#ifndef MFMP_CHAIN_HPP
#define MFMP_CHAIN_HPP

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mfmp/grid.hpp"

namespace mfmp {

// Generator of the regime chain: off-diagonal rates are nonnegative and
// every row sums to zero. Regimes are 1-based throughout.
struct GeneratorMatrix {
    int size = 1;
    std::vector<double> rates; // row-major size x size

    double rate(int i, int j) const { return rates[(i - 1) * size + (j - 1)]; }
    void validate() const; // throws std::invalid_argument on violation
};

// One cadlag regime trajectory. The exact jump times are kept (sampled from
// the exponential clocks) together with the grid projection: grid_left[k]
// is the regime active on [t_{k-1}, t_k), i.e. the left limit at t_k, and
// grid_state[k] is the cadlag value at t_k. A jump landing exactly on a
// grid node belongs to the interval that starts there.
struct ChainPath {
    TimeGrid grid;
    int num_regimes = 1;
    int initial_state = 1;
    std::vector<double> jump_times; // strictly increasing, in (0, horizon]
    std::vector<int> jump_states;   // state entered at jump_times[j]
    std::vector<int> grid_left;     // size steps+1
    std::vector<int> grid_state;    // size steps+1

    // regime just before t; requires 0 < t <= horizon
    int left_limit_state(double t) const;
    // cadlag value at t; requires 0 <= t <= horizon
    int state_at(double t) const;

    int regime_for_step(int k) const { return grid_left[k]; }
    int terminal_state() const { return grid_state[grid.steps]; }
    int num_jumps() const { return static_cast<int>(jump_times.size()); }

    void write_csv(std::ostream& os) const; // columns t,state (grid projection)
};

ChainPath sample_chain(const GeneratorMatrix& gen, const TimeGrid& grid,
                       int initial_state, std::uint64_t seed);

} // namespace mfmp

#endif
