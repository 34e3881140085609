#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace p2t {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration or input-file problems. The CLI maps these to exit code 3.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public ConfigError {
 public:
  SchemaMismatch(const std::string& what, std::vector<std::string> columns = {})
      : ConfigError(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class CellParseError : public ConfigError {
 public:
  CellParseError(const std::string& what, std::size_t row, std::string column)
      : ConfigError(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class InsufficientClassRows : public Error {
 public:
  using Error::Error;
};

class EmptyRow : public Error {
 public:
  using Error::Error;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

class NoCandidateFeatures : public Error {
 public:
  using Error::Error;
};

class EmptyPseudoSet : public Error {
 public:
  using Error::Error;
};

// Backend failures. The CLI maps these to exit code 2.
class BackendError : public Error {
 public:
  using Error::Error;
};

class BackendUnavailable : public BackendError {
 public:
  using BackendError::BackendError;
};

class ReplayMiss : public BackendError {
 public:
  explicit ReplayMiss(std::string key)
      : BackendError("no recorded exchange for cache key " + key), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace p2t
