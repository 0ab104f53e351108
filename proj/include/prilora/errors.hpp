#pragma once

#include <stdexcept>
#include <string>

namespace prilora {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not conform for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A rank plan cannot meet its total-rank budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Adapter rank exceeds min(d1, d2) of the matrix it augments.
class RankError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Checkpoint or metrics file cannot be read back.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace prilora
