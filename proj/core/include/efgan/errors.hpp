#pragma once

#include <stdexcept>
#include <string>

namespace efgan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (manifest line, config document, checkpoint header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string last_good_checkpoint)
      : Error(what), last_good_(std::move(last_good_checkpoint)) {}

  const std::string& last_good_checkpoint() const noexcept { return last_good_; }

 private:
  std::string last_good_;
};

[[noreturn]] void throw_shape(const std::string& context, const std::string& detail);

}  // namespace efgan
