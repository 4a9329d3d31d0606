#pragma once

#include <stdexcept>
#include <string>

namespace bcfl {

// Root of every error the library raises. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Fixed-point value does not fit the ring's signed headroom.
class OverflowError : public Error {
 public:
  using Error::Error;
};

class ModulusMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Correlated randomness misuse: reused triple or key, exhausted material,
// missing shares, stalled rounds.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized bytes (keys, models, blocks, datasets).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace bcfl
