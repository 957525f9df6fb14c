#include "oufield/error.hpp"

namespace oufield {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Stability: return "stability";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Sampler: return "sampler";
    case ErrorKind::Diagnostics: return "diagnostics";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace oufield
