#pragma once

#include <stdexcept>
#include <string>

namespace gmah {

// Numeric values are shared with the C API (gmah.h) and the CLI exit codes
// for config, dependency and numeric failures.
enum class ErrorCode : int {
  internal = 1,
  config = 2,
  dependency = 3,
  numeric = 4,
  dimension = 5,
  domain = 6,
  ordering = 7,
  lifecycle = 8,
  consistency = 9,
  io = 10,
  parse = 11,
  schema = 12,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define GMAH_DEFINE_ERROR(Name, Code)                                     \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

GMAH_DEFINE_ERROR(ConfigError, config)
GMAH_DEFINE_ERROR(DependencyError, dependency)
GMAH_DEFINE_ERROR(NumericError, numeric)
GMAH_DEFINE_ERROR(DimensionError, dimension)
GMAH_DEFINE_ERROR(DomainError, domain)
GMAH_DEFINE_ERROR(OrderingError, ordering)
GMAH_DEFINE_ERROR(LifecycleError, lifecycle)
GMAH_DEFINE_ERROR(ConsistencyError, consistency)
GMAH_DEFINE_ERROR(IoError, io)
GMAH_DEFINE_ERROR(ParseError, parse)
GMAH_DEFINE_ERROR(SchemaError, schema)

#undef GMAH_DEFINE_ERROR

}  // namespace gmah
