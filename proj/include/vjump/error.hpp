#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vjump {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes of two operands disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

// Input violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed text input. Carries the 1-based line number (0 when unknown).
class ParseError : public ValidationError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : ValidationError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Checkpoint container is unreadable, truncated, or of the wrong kind/version.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// File system failure (missing file, unwritable directory).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace vjump
