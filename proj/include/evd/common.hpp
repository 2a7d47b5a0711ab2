#pragma once

#include <stdexcept>
#include <string>

namespace evd {

inline constexpr const char* kVersionString = "evd 0.1.0";

/// Thrown when tensor/token shapes do not line up. The message names the
/// offending axis or dimension.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid scene geometry (blob leaving the grid, bad windows).
struct GeometryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a config fails validation. The message names the field.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when training produces a non-finite loss. Names the offending term.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace evd
