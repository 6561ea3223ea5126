#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy mirrored by the CLI exit codes: config errors exit 2,
// data errors exit 3, internal invariant violations exit 4.

namespace motionid {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct InternalError : std::logic_error {
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace motionid
