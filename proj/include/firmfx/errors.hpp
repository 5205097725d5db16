#pragma once
#include <stdexcept>
#include <string>

namespace firmfx {

// Error taxonomy mapped to CLI exit codes: config -> 2, data -> 3,
// estimation -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace firmfx
