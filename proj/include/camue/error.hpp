#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace camue {

// Every error carries a short machine-readable kind ("shape", "config", ...)
// so the CLI can print a stable single-line prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape-error", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config-error", message) {}
};

class IngestError : public Error {
 public:
  explicit IngestError(const std::string& message) : Error("ingest-error", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io-error", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric-error", message) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("usage-error", message) {}
};

}  // namespace camue
