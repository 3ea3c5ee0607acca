#pragma once

#include <stdexcept>

namespace defisim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fatal scaled-integer failure: overflow or division by zero. Usually means
// an input was mis-scaled; simulations abort rather than continue.
struct ArithmeticError : Error {
    using Error::Error;
};

// Argument outside the documented domain (utilization outside [0,1],
// invalid model parameters, ...).
struct DomainError : Error {
    using Error::Error;
};

// The market does not hold enough un-reserved cash for the operation.
struct LiquidityError : Error {
    using Error::Error;
};

// Rejected by the health check.
struct ComptrollerError : Error {
    using Error::Error;
};

// Caller broke an operation precondition (block regression, zero amount, ...).
struct PreconditionError : Error {
    using Error::Error;
};

// Malformed input; the message carries file/line/field context.
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid input violating a semantic constraint.
struct ValidationError : Error {
    using Error::Error;
};

} // namespace defisim
