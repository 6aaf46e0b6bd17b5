#pragma once

#include <stdexcept>
#include <string>

namespace gkdv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (range, order, sizes).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Two grid functions were combined on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// A value that must be finite was not.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Root bracket without a sign change.
class BracketError : public Error {
public:
    using Error::Error;
};

/// Iterative method (Newton, eigensolver, quadrature) did not converge.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A constructed object failed its own self-check.
class ConstructionError : public Error {
public:
    using Error::Error;
};

}  // namespace gkdv
