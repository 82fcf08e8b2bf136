#pragma once

#include <stdexcept>
#include <string>

namespace folio {

/// Error category, mapped onto CLI exit codes (config=1, data=2, computation=3).
enum class ErrorKind { config = 1, data = 2, computation = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

/// Invalid configuration, unknown identifiers, bad parameters.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Malformed or insufficient input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Numerical / estimation failures on valid inputs.
class ComputeError : public Error {
public:
    explicit ComputeError(const std::string& what) : Error(ErrorKind::computation, what) {}
};

}  // namespace folio
