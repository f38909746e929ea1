#pragma once
// Error taxonomy shared across the library. CLI maps ConfigError/InputError
// (and std::invalid_argument in general) to exit code 2, everything else to 3.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hiermil {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SizeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed on-disk payload; carries the byte offset of the defect.
struct FormatError : std::runtime_error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t byte_offset)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
};

struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hiermil
