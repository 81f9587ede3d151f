#include "gmah/error.hpp"

namespace gmah {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::internal: return "internal";
    case ErrorCode::config: return "config";
    case ErrorCode::dependency: return "dependency";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::domain: return "domain";
    case ErrorCode::ordering: return "ordering";
    case ErrorCode::lifecycle: return "lifecycle";
    case ErrorCode::consistency: return "consistency";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::schema: return "schema";
  }
  return "unknown";
}

}  // namespace gmah
