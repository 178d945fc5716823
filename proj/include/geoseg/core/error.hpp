#ifndef GEOSEG_CORE_ERROR_HPP
#define GEOSEG_CORE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace geoseg {

/// Base of every error raised by the library. Each subclass maps to one
/// process exit code used by the command-line front end.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or contract violation on arguments.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Unreadable, missing, or inconsistent data on disk or in memory.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Non-finite values during optimisation or evaluation.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

}  // namespace geoseg

#endif  // GEOSEG_CORE_ERROR_HPP
