#pragma once

#include <stdexcept>
#include <string>

namespace fan {

// Base for every error the library raises on purpose. Subclasses map to
// C-API status codes and CLI exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/feature-map dimension mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values (dims, heads, thresholds, schedules).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent user data (datasets, vocab files, token ids).
class DataError : public Error {
public:
    using Error::Error;
};

// API contract violations (non-scalar loss, empty memory, empty metric list).
class ContractError : public Error {
public:
    using Error::Error;
};

// Key padding mask covers every key.
class DegenerateMaskError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Checkpoint does not match the model it is applied to.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

// Synthetic scene placement exhausted its retry budget.
class GenerationError : public Error {
public:
    using Error::Error;
};

// Numerical failure during optimization (NaN loss or gradient).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace fan
