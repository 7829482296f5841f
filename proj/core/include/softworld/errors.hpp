#pragma once

#include <stdexcept>
#include <string>

namespace softworld {

/// Base class for all softworld errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform (dimension errors).
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid configuration: bad task/shape pairing, d % heads != 0,
/// zero-occupancy target, schema violations.
struct ConfigError : Error {
    using Error::Error;
};

/// Graph structure errors (edge endpoints out of range).
struct GraphError : Error {
    using Error::Error;
};

/// API misuse: non-scalar loss, empty history, horizon overflow.
struct UsageError : Error {
    using Error::Error;
};

/// Non-finite loss or gradient during training.
struct TrainingError : Error {
    using Error::Error;
};

/// NaN detected while stepping the particle system.
struct SimulationError : Error {
    using Error::Error;
};

/// Input too small for the requested operation (M < K).
struct DegenerateInputError : Error {
    using Error::Error;
};

/// Trajectory too short to derive samples (T < 2).
struct InsufficientDataError : Error {
    using Error::Error;
};

/// File read/write failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace softworld
