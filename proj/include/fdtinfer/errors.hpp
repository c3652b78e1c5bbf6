#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fdtinfer {

/// Non-finite state encountered during time stepping.
class BlowupError : public std::runtime_error {
public:
    BlowupError(std::size_t step, int chain, const std::string& what)
        : std::runtime_error(what), step_index(step), chain_index(chain) {}
    std::size_t step_index;
    int chain_index;  // -1 when not running inside an ensemble
};

/// A linear matching system turned out singular (names the offending minor).
class DegenerateSystemError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Root finder could not bracket a sign change.
class BracketError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested lag/anchor does not sit on the sampled time grid, or the grid
/// is too coarse for the requested stencil.
class GridError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Not enough retained samples for the requested estimate.
class SampleSizeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fdtinfer
