#pragma once

#include <stdexcept>
#include <string>

namespace phylofunc {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidInput,     // bad arguments, malformed files, violated preconditions
  kNumerical,        // factorization or convergence failure
  kNonIdentifiable,  // the data carry no information about the requested quantity
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error InvalidInput(const std::string& what) { return {ErrorKind::kInvalidInput, what}; }
inline Error NumericalFailure(const std::string& what) { return {ErrorKind::kNumerical, what}; }

}  // namespace phylofunc
