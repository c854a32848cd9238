#pragma once

#include <stdexcept>
#include <string>

namespace sphnet {

// Base for everything thrown by the library. The CLI maps subtypes to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape / dimension violations.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration (model, training, experiment, checkpoint/config mismatch).
struct ConfigError : Error {
    using Error::Error;
};

// Data problems: missing files, bad CSV format, imputation failures, insufficient rows.
struct DataError : Error {
    using Error::Error;
};

// Training aborted (non-finite loss).
struct TrainingError : Error {
    using Error::Error;
};

// Unreadable or truncated checkpoint files.
struct CheckpointError : Error {
    using Error::Error;
};

}  // namespace sphnet
