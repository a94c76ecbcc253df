#pragma once

#include <stdexcept>
#include <string>

namespace uigroup {

// Base class for every error this library throws. Subclasses exist so that
// callers (and the CLI exit-code mapping) can distinguish failure domains.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text (JSON syntax). Carries the byte offset when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg), byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

// Structurally valid JSON that violates the document schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& msg, const std::string& path)
      : Error(msg + " (at " + path + ")"), path(path) {}
  std::string path;
};

// Well-formed data that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Index outside a valid range (embedding rows, class targets).
class BoundsError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// An op produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Dataset-level problems: empty splits, degenerate label counts.
class DataError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

// Training loss left the finite domain.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& msg, int epoch) : Error(msg), epoch(epoch) {}
  int epoch;
};

// Checkpoint file structure problems (bad magic, unknown version).
class CheckpointFormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint content damaged (truncation, CRC mismatch, absurd lengths).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Group-rewrite failures.
class LookupError : public Error {
 public:
  using Error::Error;
};

class ContiguityError : public Error {
 public:
  using Error::Error;
};

}  // namespace uigroup
