#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slp {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensor operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller violated an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// Input is mathematically degenerate (e.g. zero-norm vector in a cosine).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// NaN/Inf surfaced, or an iterative process diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

// File and serialization failures.
class IoError : public Error {
public:
    using Error::Error;
};

class MagicMismatchError : public IoError {
public:
    using IoError::IoError;
};

class MalformedHeaderError : public IoError {
public:
    using IoError::IoError;
};

class TruncatedFileError : public IoError {
public:
    TruncatedFileError(const std::string& msg, std::size_t byte_offset)
        : IoError(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace slp
