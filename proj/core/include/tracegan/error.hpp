#pragma once

#include <stdexcept>
#include <string>

namespace tracegan {

/// Base class for every error the toolkit raises on bad input or failed I/O.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad CSV cell, bad PCAP magic, stale artifact).
class DataError : public Error {
public:
    using Error::Error;
};

/// A loss or activation became non-finite.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace tracegan
