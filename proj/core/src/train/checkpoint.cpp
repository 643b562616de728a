#include "dbt/train/checkpoint.hpp"

#include <limits>
#include <sstream>

#include "common/binary_io.hpp"
#include "dbt/error.hpp"

namespace dbt::train {

namespace {

constexpr std::string_view kMagic = "DBTC";
constexpr std::uint32_t kVersion = 1;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

void write_tensors(const TensorMap& tensors, const std::string& path) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) fail(ErrorKind::kConfig, "tensor name too long");
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) fail(ErrorKind::kShape, "tensor rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  w.save(path);
}

TensorMap read_tensors(const std::string& path) {
  auto r = io::ByteReader::open(path, "checkpoint '" + path + "'");
  if (r.bytes(4) != kMagic) r.error("bad magic, expected DBTC");
  if (const auto v = r.u32(); v != kVersion) r.error("unsupported version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16());
    Shape shape(r.u8());
    std::size_t n = 1;
    for (auto& d : shape) n *= (d = r.u32());
    if (r.remaining() < 4 * n) r.error("tensor '" + name + "' payload truncated");
    Tensor<float> t(shape);
    for (std::size_t k = 0; k < n; ++k) t[k] = r.f32();
    if (!out.emplace(name, std::move(t)).second) r.error("duplicate tensor '" + name + "'");
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const model::Model<float>& m, const std::string& path) { write_tensors(m.bindings(), path); }

void load_checkpoint(model::Model<float>& m, const std::string& path) {
  TensorMap loaded = read_tensors(path);
  std::vector<std::string> diffs;
  auto check = [&](const TensorMap& expected) {
    for (const auto& [name, t] : expected) {
      auto it = loaded.find(name);
      if (it == loaded.end()) {
        diffs.push_back("missing " + name + " " + shape_str(t.shape()));
      } else if (it->second.shape() != t.shape()) {
        diffs.push_back(name + " checkpoint " + shape_str(it->second.shape()) + " vs model " + shape_str(t.shape()));
      }
    }
  };
  check(m.params);
  check(m.buffers);
  for (const auto& [name, t] : loaded) {
    if (!m.params.count(name) && !m.buffers.count(name)) {
      diffs.push_back("unexpected " + name + " " + shape_str(t.shape()));
    }
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint '" + path + "' does not match descriptor '" + m.descriptor.name + "': ";
    for (std::size_t i = 0; i < diffs.size(); ++i) msg += (i ? "; " : "") + diffs[i];
    fail(ErrorKind::kShape, msg);
  }
  for (auto& [name, t] : m.params) t = std::move(loaded.at(name));
  for (auto& [name, t] : m.buffers) t = std::move(loaded.at(name));
}

}  // namespace dbt::train
