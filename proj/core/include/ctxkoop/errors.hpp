#pragma once

#include <stdexcept>
#include <string>

namespace ctxkoop {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied value is invalid (non-finite, empty, out of range).
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration parameter.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Value outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: singular innovation, failed factorization, non-finite loss.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Object used before it was initialized.
class StateError : public Error {
public:
    using Error::Error;
};

/// File layout or document structure does not match the expected schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A cell or token could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A withheld (silence-masked) ground-truth sample was requested by a training or prediction path.
class TaintError : public Error {
public:
    using Error::Error;
};

}  // namespace ctxkoop
