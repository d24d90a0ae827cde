#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace momental {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Vector lengths disagree.
class DimensionError : public Error {
public:
  DimensionError(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)),
        expected_(expected), actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

private:
  std::size_t expected_;
  std::size_t actual_;
};

/// A non-finite value showed up where a finite one is required.
class NumericError : public Error {
public:
  NumericError(const std::string &what, std::size_t index)
      : Error(what + " (coordinate " + std::to_string(index) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

class StateError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Telemetry received steps out of order.
class SequencingError : public Error {
public:
  using Error::Error;
};

class AggregationError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  IoError(const std::string &what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

} // namespace momental
