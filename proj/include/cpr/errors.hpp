#pragma once

#include <stdexcept>
#include <string>

namespace cpr {

// Base class for every failure contract in the library. The CLI maps these
// to exit codes: usage/config problems exit 1, everything else exits 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroNormError : Error {
    using Error::Error;
};

struct DimensionMismatchError : Error {
    using Error::Error;
};

struct LabelOutOfRangeError : Error {
    using Error::Error;
};

struct InvalidArchitectureError : Error {
    using Error::Error;
};

struct EmptyClassError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct InvalidNuError : Error {
    using Error::Error;
};

struct DegenerateDissimilarityError : Error {
    using Error::Error;
};

struct BatchTooSmallError : Error {
    using Error::Error;
};

struct InvalidParamError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct InconsistentWidthError : Error {
    using Error::Error;
};

struct UnknownLabelError : Error {
    using Error::Error;
};

struct FractionTooSmallError : Error {
    using Error::Error;
};

struct PrototypesUninitializedError : Error {
    using Error::Error;
};

struct NonFiniteLossError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace cpr
