#ifndef MFMP_GRID_HPP
#define MFMP_GRID_HPP

#include <stdexcept>

namespace mfmp {

// Uniform time grid on [0, horizon] with `steps` intervals.
struct TimeGrid {
    double horizon = 1.0;
    int steps = 100;

    double dt() const { return horizon / steps; }
    double t(int k) const { return horizon * k / steps; }

    void validate() const {
        if (horizon <= 0.0) throw std::invalid_argument("horizon must be positive");
        if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    }
};

} // namespace mfmp

#endif
