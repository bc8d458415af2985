#pragma once

#include <stdexcept>
#include <string>

namespace pacit {

/// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON, JSONL, catalog file).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Caller passed arguments outside an operation's contract.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// A component broke one of its own invariants.
class InternalError : public Error {
public:
  using Error::Error;
};

/// Network / service failure while talking to a completion endpoint.
class TransportError : public Error {
public:
  TransportError(const std::string& what, int status, bool transient)
      : Error(what), status_(status), transient_(transient) {}

  int status() const noexcept { return status_; }
  bool transient() const noexcept { return transient_; }

private:
  int status_;
  bool transient_;
};

}  // namespace pacit
