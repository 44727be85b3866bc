#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace sfanc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration file or option value. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// Missing or unusable input data. CLI exit code 3.
struct DataError : Error {
    using Error::Error;
};

struct FileNotFoundError : DataError {
    explicit FileNotFoundError(const std::string& path)
        : DataError("file not found: " + path) {}
};

/// Malformed or unsupported file contents (e.g. non-PCM WAV).
struct FormatError : DataError {
    using DataError::DataError;
};

/// A file parsed correctly but holds no usable samples.
struct EmptyDataError : DataError {
    using DataError::DataError;
};

/// Recordings too short to draw the requested task windows.
struct InsufficientDataError : DataError {
    using DataError::DataError;
};

/// Non-finite values appeared where finite arithmetic is required.
struct NumericError : Error {
    using Error::Error;
};

/// Adaptive weights exceeded the overflow guard. CLI exit code 4.
/// `sample_index` is filled in by loops that track a time axis.
struct DivergenceError : NumericError {
    explicit DivergenceError(const std::string& what,
                             std::optional<std::size_t> index = std::nullopt)
        : NumericError(what), sample_index(index) {}

    std::optional<std::size_t> sample_index;
};

}  // namespace sfanc
