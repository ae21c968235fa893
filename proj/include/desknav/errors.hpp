#pragma once

#include <stdexcept>
#include <string>

namespace desknav {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidPlaneError : public Error {
public:
    using Error::Error;
};

class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class InsufficientPointsError : public Error {
public:
    using Error::Error;
};

class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

/// Iterative solver gave up; carries the last residual.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Malformed configuration. `location` is a JSON pointer into the document.
class ConfigError : public Error {
public:
    ConfigError(const std::string& location, const std::string& message)
        : Error(location.empty() ? message : location + ": " + message),
          location_(location) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace desknav
