#pragma once

#include <stdexcept>
#include <string>

namespace pcic {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedCalibration : Error {
    using Error::Error;
};
struct InvalidRotation : Error {
    using Error::Error;
};
struct MalformedScan : Error {
    using Error::Error;
};
struct IncompleteFrame : Error {
    using Error::Error;
};
struct RoiOutOfBounds : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct MalformedBitstream : Error {
    using Error::Error;
};
struct ModelMismatch : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    using Error::Error;
};
struct NoOverlap : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace pcic
