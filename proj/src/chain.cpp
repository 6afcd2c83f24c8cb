#include "mfmp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "mfmp/rng.hpp"
#include "mfmp/report.hpp"

namespace mfmp {

void GeneratorMatrix::validate() const {
    if (size < 1) throw std::invalid_argument("generator: size must be >= 1");
    if (rates.size() != static_cast<std::size_t>(size) * size)
        throw std::invalid_argument("generator: rate matrix must be size x size");
    for (int i = 1; i <= size; ++i) {
        double row = 0.0;
        for (int j = 1; j <= size; ++j) {
            double r = rate(i, j);
            if (i != j && r < 0.0)
                throw std::invalid_argument("generator: negative off-diagonal rate");
            row += r;
        }
        if (std::abs(row) > 1e-12 * std::max(1.0, std::abs(rate(i, i))))
            throw std::invalid_argument("generator: row does not sum to zero");
    }
}

ChainPath sample_chain(const GeneratorMatrix& gen, const TimeGrid& grid,
                       int initial_state, std::uint64_t seed) {
    gen.validate();
    grid.validate();
    if (initial_state < 1 || initial_state > gen.size)
        throw std::invalid_argument("initial regime out of range");

    ChainPath path;
    path.grid = grid;
    path.num_regimes = gen.size;
    path.initial_state = initial_state;

    Rng rng(seed);
    double t = 0.0;
    int s = initial_state;
    const double T = grid.horizon;
    while (true) {
        double hold = -gen.rate(s, s);
        if (hold <= 0.0) break; // absorbing state
        t += rng.next_exponential(hold);
        if (t > T) break;
        // next state by inverse CDF over the off-diagonal rates
        double u = rng.next_uniform() * hold;
        double acc = 0.0;
        int next = s;
        for (int j = 1; j <= gen.size; ++j) {
            if (j == s) continue;
            acc += gen.rate(s, j);
            if (u <= acc) {
                next = j;
                break;
            }
        }
        if (next == s) { // numerical tail spill
            for (int j = gen.size; j >= 1; --j)
                if (j != s && gen.rate(s, j) > 0.0) {
                    next = j;
                    break;
                }
        }
        path.jump_times.push_back(t);
        path.jump_states.push_back(next);
        s = next;
    }

    path.grid_left.resize(grid.steps + 1);
    path.grid_state.resize(grid.steps + 1);
    path.grid_left[0] = initial_state;
    path.grid_state[0] = path.state_at(0.0);
    for (int k = 1; k <= grid.steps; ++k) {
        double tk = grid.t(k);
        path.grid_left[k] = path.left_limit_state(tk);
        path.grid_state[k] = path.state_at(tk);
    }
    return path;
}

int ChainPath::left_limit_state(double t) const {
    if (t <= 0.0 || t > grid.horizon)
        throw std::invalid_argument("left_limit_state: t must lie in (0, horizon]");
    // last jump strictly before t; a jump exactly at t is excluded
    auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return initial_state;
    return jump_states[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

int ChainPath::state_at(double t) const {
    if (t < 0.0 || t > grid.horizon)
        throw std::invalid_argument("state_at: t must lie in [0, horizon]");
    // last jump at or before t
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return initial_state;
    return jump_states[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

void ChainPath::write_csv(std::ostream& os) const {
    os << "t,state\n";
    for (int k = 0; k <= grid.steps; ++k)
        os << fmt_double(grid.t(k)) << ',' << grid_left[k] << '\n';
}

} // namespace mfmp
