#pragma once

#include <stdexcept>
#include <string>

namespace was {

// Invalid configuration: bad shapes, unknown ids, malformed config fields.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (dataset files, checkpoints).
struct DataFormatError : std::runtime_error {
    explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller misuse of an API (wrong argument domain).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric blow-up during training; message names the offending layer or op.
struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace was
