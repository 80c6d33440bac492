#pragma once

#include <stdexcept>
#include <string>

namespace profl {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Missing or stale forward-pass activations.
struct CacheError : Error {
    using Error::Error;
};

// Parameter vector layout mismatches (pack/unpack/sgd/aggregate).
struct LayoutError : Error {
    using Error::Error;
};

// Bad argument values (labels out of range, empty inputs, ...).
struct ValueError : Error {
    using Error::Error;
};

// Operations invoked in an illegal order (double snapshot, step misuse).
struct StateError : Error {
    using Error::Error;
};

// Config file problems: unknown keys, bad types, out-of-range values.
struct ConfigError : Error {
    using Error::Error;
};

// File system problems: missing files, short reads, write failures.
struct IoError : Error {
    using Error::Error;
};

// Structurally broken input files (bad magic, inconsistent headers).
struct FormatError : Error {
    using Error::Error;
};

}  // namespace profl
