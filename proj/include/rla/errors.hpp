#pragma once

#include <stdexcept>
#include <string>

namespace rla {

/// Invalid configuration or unusable input artifact. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Generation backend failure after retries. Maps to CLI exit code 3.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rla
