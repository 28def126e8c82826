#pragma once

#include <stdexcept>
#include <string>

namespace maneuver {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values or inconsistent settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed, missing or invalid input data (CSV schema, ordering, parsing).
class DataError : public Error {
public:
    using Error::Error;
};

// Shape, dimension or compatibility mismatch between artifacts.
class DimensionError : public Error {
public:
    using Error::Error;
};

}  // namespace maneuver
