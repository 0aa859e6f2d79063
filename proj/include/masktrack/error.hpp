#pragma once

#include <stdexcept>
#include <string>

namespace masktrack {

// Error categories map to CLI exit codes: ConfigError -> 2, DataError -> 3,
// NumericalError -> 4. Anything else is an internal failure (exit 1).

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& message) : std::runtime_error(message) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace masktrack
