#ifndef DWCAPS_ERRORS_HPP_
#define DWCAPS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dwcaps {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or mismatched tensor shapes, axes, or layer geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Numeric argument outside its admissible domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// API misuse: a documented precondition was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training-time failure (e.g. the loss diverged).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dwcaps

#endif  // DWCAPS_ERRORS_HPP_
