#pragma once

#include <stdexcept>
#include <string>

namespace csvgd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched dimensions or layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Unreadable or inconsistent files (checkpoints, configs, datasets).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace csvgd
