#pragma once

#include <stdexcept>
#include <string>

namespace mgp {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: config, schema, dimension mismatch, unsupported combination.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; message names the row and column.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Rank deficiency, root bracketing failure and similar.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Operation the predictive rule does not provide (e.g. pointwise sampling
/// from a pair-coupled rule).
class UnsupportedOperation : public Error {
public:
    using Error::Error;
};

/// Predictive-service peer sent something outside the wire contract.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Socket-level failure talking to a predictive service.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace mgp
