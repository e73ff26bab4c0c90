#pragma once

#include <stdexcept>
#include <string>

namespace pbsae {

// Base for all library errors. `kind()` is a short stable tag used in the
// CLI's machine-readable error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Invalid configuration or preconditions that the caller controls.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

// Input file does not match the expected column schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column)
      : Error("schema", what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

// A numerical procedure failed (singular system, non-convergence that cannot
// be flagged, and so on).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

}  // namespace pbsae
