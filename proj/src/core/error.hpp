#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace udm {

// Coarse failure categories. These map 1:1 onto the process exit codes the
// CLI promises (0 ok, 2 config, 3 numeric, 4 io), so every exception type
// below picks one of them.
enum class ErrorCode : int {
  ok = 0,
  config = 2,
  numeric = 3,
  io = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCode::config, w) {}
};

struct PermutationError : Error {
  explicit PermutationError(const std::string& w) : Error(ErrorCode::config, w) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorCode::config, w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCode::config, w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorCode::config, w) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCode::numeric, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::io, w) {}
};

inline void check_finite(const double* p, size_t n, const char* where) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericError(std::string(where) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

}  // namespace udm
