#pragma once

#include <string>

#include "dbt/engine/tensor.hpp"

namespace dbt::detail {

inline void expect_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    fail(ErrorKind::kShape, std::string(what) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_to_string(s));
  }
}

inline void expect_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (actual != expected) {
    fail(ErrorKind::kShape, std::string(what) + ": expected " + shape_to_string(expected) +
                                ", got " + shape_to_string(actual));
  }
}

inline void expect(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace dbt::detail
