#pragma once

#include <stdexcept>
#include <string>

namespace stylealign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or contract-violating input data (corpus records, vectors, score lists).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Two vectors (or a vector and a store) disagree on dimensionality.
class DimensionMismatch : public DataError {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual, const std::string& context = {})
      : DataError("dimension mismatch" + (context.empty() ? std::string() : " in " + context) +
                  ": expected " + std::to_string(expected) + ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Invalid run configuration. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An external service failed. Maps to CLI exit code 2.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// A provider failure that may succeed on retry (timeouts, 5xx, 429, connection resets).
class TransientError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// A provider response that could not be interpreted; keeps the raw payload for diagnosis.
class ParseError : public ProviderError {
 public:
  ParseError(const std::string& what, std::string payload)
      : ProviderError(what + " (raw payload: " + payload + ")"), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

/// A statistic is mathematically undefined for the given input (e.g. zero variance).
class UndefinedStatistic : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace stylealign
