#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsss {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extents or layouts do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// A value violates a documented precondition (NaN input, label out of range, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Config file or --set override could not be parsed.
struct ConfigError : Error {
    int line = 0;
    int column = 0;
    ConfigError(const std::string& msg, int line_, int column_)
        : Error(msg + " (line " + std::to_string(line_) + ", column " + std::to_string(column_) + ")"),
          line(line_),
          column(column_) {}
};

// Malformed image file; offset is the byte position of the first bad byte.
struct FormatError : Error {
    std::uint64_t offset = 0;
    FormatError(const std::string& msg, std::uint64_t offset_)
        : Error(msg + " (byte offset " + std::to_string(offset_) + ")"), offset(offset_) {}
};

struct IoError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    long step = 0;
    DivergenceError(const std::string& msg, long step_)
        : Error(msg + " (step " + std::to_string(step_) + ")"), step(step_) {}
};

}  // namespace dsss
