// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace geovid {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN/Inf appeared, or a numeric routine could not produce a finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Input data carries no usable information (empty masks, zero weights).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A scalar argument or configuration value is out of its allowed range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Object is in the wrong state for the request (e.g. scale kind).
class StateError : public Error {
public:
    using Error::Error;
};

/// Value outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class InvalidRoleError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace geovid
