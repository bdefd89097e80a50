#pragma once

#include <stdexcept>
#include <string>

namespace relcat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dataset file could not be opened or has the wrong layout.
class LoadError : public Error {
 public:
  LoadError(std::string table, const std::string& what)
      : Error(what), table_(std::move(table)) {}
  const std::string& table() const { return table_; }

 private:
  std::string table_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or similar numerical failure during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace relcat
