#pragma once

#include <stdexcept>
#include <string>

namespace halluc {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or fields that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition or invariant of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, descriptor or wire message.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Referenced object (tensor id, dataset, file) does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// An external decoder failed, timed out or violated the protocol.
class DecoderError : public Error {
 public:
  DecoderError(const std::string& what, bool unavailable = false)
      : Error(what), unavailable_(unavailable) {}
  /// True when the decoder could not be reached at all.
  bool unavailable() const { return unavailable_; }

 private:
  bool unavailable_;
};

}  // namespace halluc
