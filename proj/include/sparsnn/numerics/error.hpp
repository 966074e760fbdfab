#pragma once

#include <stdexcept>
#include <string>

namespace sparsnn {

// Base of every error raised by the library. The CLI maps InvariantError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Incompatible tensor shapes; the message names the offending axes.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

// A NaN or Inf appeared in an op output, a membrane potential or a loss.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

// Bad configuration value or bad command line usage.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// Malformed dataset or checkpoint file.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& message) : Error("format", message) {}
};

// Training diverged (loss exploded past the configured bound).
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& message) : Error("divergence", message) {}
};

// Internal invariant violated. Never recoverable.
class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& message) : Error("invariant", message) {}
};

#define SPARSNN_CHECK(cond, msg)                                                      \
    do {                                                                              \
        if (!(cond)) throw ::sparsnn::InvariantError(std::string(msg) + " [" #cond "]"); \
    } while (0)

}  // namespace sparsnn
