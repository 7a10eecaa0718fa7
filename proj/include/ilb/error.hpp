#pragma once

#include <stdexcept>
#include <string>

namespace ilb {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A physical or numerical parameter is outside its admissible range.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Pointwise evaluation requested on the kernel diagonal v == v'.
class SingularInput : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class BudgetTooSmall : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

class CflViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MissingCalibration : public Error {
public:
    using Error::Error;
};

class CacheMismatch : public Error {
public:
    using Error::Error;
};

} // namespace ilb

namespace ilb {

/// Requested dense assembly exceeds the configured memory budget.
class AssemblyOverflow : public Error {
public:
    using Error::Error;
};

} // namespace ilb
