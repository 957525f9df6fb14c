#pragma once

#include <stdexcept>
#include <string>

namespace oufield {

enum class ErrorKind {
  Config,
  Data,
  Domain,
  Stability,
  Numerical,
  Unsupported,
  Sampler,
  Diagnostics,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the C API and CLI
// can map it onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define OUFIELD_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& message) : Error(ErrorKind::Kind, message) {} \
  };

OUFIELD_DEFINE_ERROR(ConfigError, Config)
OUFIELD_DEFINE_ERROR(DataError, Data)
OUFIELD_DEFINE_ERROR(DomainError, Domain)
OUFIELD_DEFINE_ERROR(StabilityError, Stability)
OUFIELD_DEFINE_ERROR(NumericalError, Numerical)
OUFIELD_DEFINE_ERROR(UnsupportedError, Unsupported)
OUFIELD_DEFINE_ERROR(SamplerError, Sampler)
OUFIELD_DEFINE_ERROR(DiagnosticsError, Diagnostics)
OUFIELD_DEFINE_ERROR(IoError, Io)

#undef OUFIELD_DEFINE_ERROR

}  // namespace oufield
