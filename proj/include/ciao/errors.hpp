#pragma once

#include <stdexcept>
#include <string>

namespace ciao {

// Bad user input: configs, shapes, label schemes, malformed files.
// The CLI maps this family to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Misuse of a recorded graph (double backward, non-scalar loss).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values during training or evaluation. Exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ciao
