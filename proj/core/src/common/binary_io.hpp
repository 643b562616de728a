#pragma once

// Little-endian encoding helpers shared by the dataset and checkpoint
// containers. Bytes are assembled explicitly so the files do not depend on
// host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "dbt/error.hpp"

namespace dbt::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail(ErrorKind::kIo, "write failed for '" + path + "'");
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  std::vector<char> buf_;
};

/// Bounds-checked reader over a whole file; every overrun is a kFormat error
/// that names the container.
class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

  static ByteReader open(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), what);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) fail(ErrorKind::kFormat, what_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }
  [[noreturn]] void error(const std::string& msg) const { fail(ErrorKind::kFormat, what_ + ": " + msg); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) error("truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::vector<char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace dbt::io
