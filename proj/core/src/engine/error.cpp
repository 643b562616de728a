#include "dbt/error.hpp"

namespace dbt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
      return "shape";
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kUnbound:
      return "unbound";
    case ErrorKind::kTape:
      return "tape";
    case ErrorKind::kNumeric:
      return "numeric";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kFormat:
      return "format";
  }
  return "unknown";
}

}  // namespace dbt
