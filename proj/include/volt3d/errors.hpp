#pragma once

#include <stdexcept>
#include <string>

namespace volt3d {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed inputs: bad files, bad directory layouts, bad labels. CLI exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

// Bad run configuration: unknown keys, infeasible architecture specs. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem failures while reading or writing artifacts. CLI exit code 2.
class IoError : public Error {
public:
    using Error::Error;
};

// Inter-module contract violations: shape mismatches, stale tapes, key mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Numeric breakdown at runtime: non-finite loss or gradient. CLI exit code 1.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace volt3d
