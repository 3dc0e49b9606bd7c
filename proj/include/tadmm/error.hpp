#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tadmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Raised when a Cholesky pivot is not strictly positive.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::size_t pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " has value " + std::to_string(value)),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset)
      : Error(what + " (line " + std::to_string(line) + ", offset " + std::to_string(offset) + ")"),
        line_(line),
        offset_(offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace detail

}  // namespace tadmm
