#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fsskit {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/extent mismatches between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Bad user-supplied configuration (thresholds out of range, empty batches, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failures (open/create/write).
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed serialized data; carries the byte offset of the defect.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const { return offset_; }

private:
    std::size_t offset_ = 0;
};

// Operation requested in a mode that cannot supply its inputs
// (e.g. DICM masking without a query mask outside training).
class ModeError : public Error {
public:
    using Error::Error;
};

// A documented invariant was violated by the inputs.
class InvariantError : public Error {
public:
    using Error::Error;
};

// Softmax over a row whose entries are all masked.
class DegenerateRowError : public Error {
public:
    using Error::Error;
};

// Episode that cannot be processed at all (e.g. support mask with no foreground).
class InvalidEpisodeError : public Error {
public:
    using Error::Error;
};

}  // namespace fsskit
