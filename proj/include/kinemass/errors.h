#pragma once
#include <stdexcept>
#include <string>

namespace kinemass {

/// invalid run configuration (bad keys, out-of-range values): CLI exit code 2
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// malformed or unusable input data (catalog parse failures, empty bins): exit code 3
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// numerical failure (non-convergent quadrature or root solve, non-finite results): exit code 4
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kinemass
