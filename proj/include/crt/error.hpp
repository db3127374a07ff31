#pragma once

#include <stdexcept>
#include <string>

namespace crt {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad file headers, unparseable values, inconsistent shapes.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (shape, range, option value).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A numerical kernel broke down (singular system, SVD failure).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace crt
