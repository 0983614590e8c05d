#pragma once

#include <stdexcept>
#include <string>

namespace momentfield {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid input data: shape mismatches, symmetry or PSD violations,
/// inconsistent model flags.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation
/// (negative time, zero mode count, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// A requested computation exceeds the configured storage cap.
class CapacityError : public Error {
public:
  using Error::Error;
};

/// A numerical procedure failed to converge within its refinement cap.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Config file problems; `path` is a JSON-pointer-style location.
class ConfigError : public Error {
public:
  ConfigError(const std::string& path, const std::string& what)
      : Error("config error at " + path + ": " + what), path_(path) {}

  const std::string& path() const { return path_; }

private:
  std::string path_;
};

}  // namespace momentfield
