#pragma once

#include <stdexcept>
#include <string>

namespace forage {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out of range, ...).
class InvalidArgument : public Error
{
public:
  using Error::Error;
};

/// A computation hit a numerically degenerate state (zero probability
/// support, empty topic, exhausted vocabulary).
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Malformed or inconsistent input file.
class FormatError : public Error
{
public:
  using Error::Error;
};

}  // namespace forage
