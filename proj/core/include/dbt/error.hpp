#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dbt {

/// Error categories surfaced by the library. The CLI prints the category as a
/// stable machine-readable token.
enum class ErrorKind {
  kShape,
  kConfig,
  kUnbound,
  kTape,
  kNumeric,
  kIo,
  kFormat,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dbt
