#pragma once

#include <stdexcept>
#include <string>

namespace owslr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or dimension contract violated.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A non-finite value was produced or supplied.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Misuse of the autograd graph (non-scalar loss, repeated backward, ...).
class GraphError : public Error {
public:
    using Error::Error;
};

/// Malformed file content (images, checkpoints).
class FormatError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value; the message names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace owslr
