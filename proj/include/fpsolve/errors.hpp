#pragma once

#include <stdexcept>
#include <string>

namespace fpsolve {

/// Raised for invalid experiment configuration or malformed inputs (CLI exit code 1).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a computation fails numerically: trajectory blow-up, singular
/// systems, solver non-convergence (CLI exit code 2).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fpsolve
