#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gem {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was called with inputs that violate its contract.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage ran before the stage it depends on (e.g. GEM on
/// responses that were never preprocessed).
class PipelineOrderError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset record. `line()` is 1-based; 0 when not line-specific.
class DatasetError : public Error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Transport-level failure (connection refused, 5xx, 429). The only kind
/// the gateway retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The prompt does not fit the model context. Never retried.
class ContextLengthError : public Error {
 public:
  ContextLengthError(const std::string& what, std::size_t requested_tokens, std::size_t limit_tokens)
      : Error(what), requested_(requested_tokens), limit_(limit_tokens) {}
  std::size_t requested_tokens() const noexcept { return requested_; }
  std::size_t limit_tokens() const noexcept { return limit_; }

 private:
  std::size_t requested_;
  std::size_t limit_;
};

/// The backend does not offer an operation (no logprobs, no embeddings).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A backend answer violates a structural guarantee (token round trip,
/// positive log-probability, ...).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Model output could not be parsed into the expected shape.
class ParseError : public Error {
 public:
  using Error::Error;
};

class RangeError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace gem
