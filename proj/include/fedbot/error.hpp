#pragma once

#include <stdexcept>
#include <string>

namespace fedbot {

/// Malformed or missing input data (CSV files, device directories, artifacts).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration supplied by the caller.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Truncated, corrupt, or version-mismatched serialized payload.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fedbot
