#pragma once

#include <stdexcept>
#include <string>

namespace qvae {

/// Base class of every error raised by the library. `kind()` is a short
/// machine-readable tag used by the command-line front end.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error("dimension", w) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error("numerical", w) {}
};

struct CapacityError : Error {
  explicit CapacityError(const std::string& w) : Error("capacity", w) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error("validation", w) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& w) : Error("index", w) {}
};

/// Re-raises `e` as the same error type with `context` prepended.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string w = context + ": " + e.what();
  const std::string& k = e.kind();
  if (k == "dimension") throw DimensionError(w);
  if (k == "numerical") throw NumericalError(w);
  if (k == "capacity") throw CapacityError(w);
  if (k == "validation") throw ValidationError(w);
  if (k == "format") throw FormatError(w);
  if (k == "config") throw ConfigError(w);
  if (k == "index") throw IndexError(w);
  throw Error(k, w);
}

}  // namespace qvae
