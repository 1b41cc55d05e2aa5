#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTokenError : public Error {
 public:
  explicit UnknownTokenError(std::string name)
      : Error("unknown token: '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

// position is the 0-based index of the offending token; when the input ends
// early it is the index of the last token consumed.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : Error("parse error at token " + std::to_string(position) + ": " + what),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t batch, const std::string& what)
      : Error("non-finite loss in batch " + std::to_string(batch) + ": " + what),
        batch_(batch) {}
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t batch_;
};

}  // namespace stn
