#pragma once

#include <stdexcept>
#include <string>

namespace deepdust {

enum class ErrorKind {
  kArgument,    // bad caller input or CLI usage
  kData,        // malformed or insufficient data, I/O failures
  kDivergence,  // training produced a non-finite loss
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error argument_error(const std::string& what) { return {ErrorKind::kArgument, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::kData, what}; }
inline Error divergence_error(const std::string& what) { return {ErrorKind::kDivergence, what}; }

}  // namespace deepdust
