#ifndef SWL_ERROR_HPP
#define SWL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace swl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant (bad propensity, ragged panel, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// No subject is fully matched to the evaluated regime.
class NoOverlapError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite objective.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace swl

#endif  // SWL_ERROR_HPP
