#pragma once

#include <stdexcept>
#include <string>

namespace aifc {

// Every failure surfaced by the library derives from Error so callers can
// catch one type; the subclasses are the distinct error classes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0) : Error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Container framing errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigMismatchError : public Error {
 public:
  using Error::Error;
};

// Entropy coding.
class SupportOverflowError : public Error {
 public:
  using Error::Error;
};

class SymbolError : public Error {
 public:
  using Error::Error;
};

class CorruptStreamError : public Error {
 public:
  using Error::Error;
};

// Training / evaluation.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class NoOverlapError : public Error {
 public:
  using Error::Error;
};

class OrderError : public Error {
 public:
  using Error::Error;
};

}  // namespace aifc
