#pragma once

#include <stdexcept>
#include <string>

namespace lbsim {

enum class ErrorKind {
  kParse,
  kValidation,
  kNotFound,
  kShape,
  kNumeric,
  kIo,
  kConfig,
};

/// Library-wide exception. The C API maps `kind()` onto its error codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lbsim
