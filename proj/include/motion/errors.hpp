#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace motion {

// Shape or dimension mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A NaN or Inf appeared where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Invalid configuration, partition or skeleton topology.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace motion
