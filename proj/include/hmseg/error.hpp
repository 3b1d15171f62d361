#pragma once

#include <stdexcept>
#include <string>

namespace hmseg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed manifest/config/feature file. Message carries the line or field.
struct SchemaError : Error {
    using Error::Error;
};

/// Manifest entries that point at files which do not exist.
struct DanglingReferenceError : Error {
    using Error::Error;
};

struct UniquenessError : Error {
    using Error::Error;
};

struct InfeasibleSplitError : Error {
    using Error::Error;
};

struct EmptySplitError : Error {
    using Error::Error;
};

/// Values outside the class taxonomy or otherwise out of domain.
struct DomainError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct IncompletePaletteError : Error {
    using Error::Error;
};

/// Image/label or historical/modern pairs that do not line up by tile_id.
struct PairingError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace hmseg
