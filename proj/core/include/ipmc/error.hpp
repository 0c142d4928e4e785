#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ipmc {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV rows, code notation, label grammar, JSON).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Failure while decoding a bitstream.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t sample_index)
      : Error("sample " + std::to_string(sample_index) + ": " + what), sample_index_(sample_index) {}
  std::size_t sample_index() const noexcept { return sample_index_; }

 private:
  std::size_t sample_index_;
};

}  // namespace ipmc
