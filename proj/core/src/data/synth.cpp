#include "dbt/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "common/binary_io.hpp"
#include "dbt/error.hpp"
#include "dbt/random.hpp"

namespace dbt::data {

namespace {

constexpr double kBackground = 0.5;
constexpr double kContrast = 0.4;
constexpr double kMinRadius = 0.14;  // fractions of the image size
constexpr double kMaxRadius = 0.20;
constexpr int kPlacementTries = 200;

std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > (1ull << 40)) return r;  // large enough for any realistic class count
  }
  return r;
}

std::size_t angle_count(const DatasetSpec& s) { return std::max<std::size_t>(2, (s.texture_bank_size + 1) / 2); }

// Lexicographic successor of a sorted k-combination of [0, n); false when done.
bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  for (std::size_t i = k; i-- > 0;) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace

void DatasetSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "dataset: " + m); };
  if (classes < 2) bad("classes must be >= 2, got " + std::to_string(classes));
  if (samples_per_class < 1) bad("samples_per_class must be >= 1");
  if (image_size != 32 && image_size != 64) bad("image_size must be 32 or 64, got " + std::to_string(image_size));
  if (parts_per_image < 2) bad("parts_per_image must be >= 2, got " + std::to_string(parts_per_image));
  if (texture_bank_size < parts_per_image) bad("texture_bank_size must be >= parts_per_image");
  if (!(noise_std >= 0) || !std::isfinite(noise_std)) bad("noise_std must be finite and >= 0");
  if (choose(texture_bank_size, parts_per_image) < classes) {
    bad(std::to_string(classes) + " classes exceed the " + std::to_string(choose(texture_bank_size, parts_per_image)) +
        " texture combinations");
  }
}

std::vector<std::vector<std::size_t>> class_textures(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t n = spec.texture_bank_size, k = spec.parts_per_image;
  std::vector<std::vector<std::size_t>> out;
  std::set<std::vector<std::size_t>> seen;
  auto take = [&](std::vector<std::size_t> c) {
    std::sort(c.begin(), c.end());
    if (out.size() < spec.classes && seen.insert(c).second) out.push_back(std::move(c));
  };
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::size_t> w(k);
    for (std::size_t j = 0; j < k; ++j) w[j] = (c + j) % n;
    take(std::move(w));
  }
  std::vector<std::size_t> comb(k);
  for (std::size_t j = 0; j < k; ++j) comb[j] = j;
  do {
    take(comb);
  } while (out.size() < spec.classes && next_combination(comb, n));
  return out;
}

double texture_value(const DatasetSpec& spec, std::size_t id, double row, double col, double phase) {
  const std::size_t angles = angle_count(spec);
  const double angle = std::numbers::pi * static_cast<double>(id % angles) / static_cast<double>(angles);
  const double period = static_cast<double>(spec.image_size) / (5.0 + 5.0 * static_cast<double>(id / angles));
  const double u = col * std::cos(angle) + row * std::sin(angle);
  return std::sin(2.0 * std::numbers::pi * u / period + phase);
}

Sample generate_sample(const DatasetSpec& spec, std::size_t index) {
  spec.validate();
  const std::size_t S = spec.image_size;
  const double size = static_cast<double>(S);
  Sample s;
  s.label = index % spec.classes;
  const auto textures = class_textures(spec).at(s.label);

  CounterRng stream = CounterRng(spec.seed).split(static_cast<std::uint64_t>(index));
  CounterRng layout = stream.split("layout"), phases = stream.split("phase"), noise = stream.split("noise");

  for (std::size_t p = 0; p < textures.size(); ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      Part part;
      part.radius = size * (kMinRadius + (kMaxRadius - kMinRadius) * layout.uniform());
      part.cx = part.radius + (size - 2 * part.radius) * layout.uniform();
      part.cy = part.radius + (size - 2 * part.radius) * layout.uniform();
      part.texture = textures[p];
      placed = std::all_of(s.part_layout.begin(), s.part_layout.end(), [&](const Part& q) {
        return std::hypot(part.cx - q.cx, part.cy - q.cy) >= part.radius + q.radius + 1.0;
      });
      if (placed) s.part_layout.push_back(part);
    }
    if (!placed) {
      fail(ErrorKind::kConfig, "dataset: cannot place " + std::to_string(textures.size()) +
                                   " non-overlapping parts in a " + std::to_string(S) + "x" + std::to_string(S) +
                                   " image after " + std::to_string(kPlacementTries) + " tries");
    }
  }

  std::vector<double> phase(s.part_layout.size());
  for (auto& ph : phase) ph = 2.0 * std::numbers::pi * phases.uniform();

  s.image = Tensor<float>({3, S, S});
  for (std::size_t r = 0; r < S; ++r) {
    for (std::size_t c = 0; c < S; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      double v = kBackground;
      for (std::size_t p = 0; p < s.part_layout.size(); ++p) {
        const auto& part = s.part_layout[p];
        if (std::hypot(x - part.cx, y - part.cy) <= part.radius) {
          v = kBackground + kContrast * texture_value(spec, part.texture, y, x, phase[p]);
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double pix = spec.noise_std > 0 ? v + spec.noise_std * noise.normal() : v;
        s.image[(ch * S + r) * S + c] = static_cast<float>(std::clamp(pix, 0.0, 1.0));
      }
    }
  }
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset out;
  out.reserve(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out.push_back(generate_sample(spec, i));
  return out;
}

std::size_t num_classes(const Dataset& data) {
  std::size_t n = 0;
  for (const auto& s : data) n = std::max(n, s.label + 1);
  return n;
}

SplitIndices split_indices(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) {
    fail(ErrorKind::kConfig, "split: train_fraction must be in (0, 1), got " + std::to_string(train_fraction));
  }
  std::vector<std::vector<std::size_t>> by_class(num_classes(data));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
  const CounterRng root(seed);
  SplitIndices out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      fail(ErrorKind::kConfig, "split: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                   " samples, need at least 2");
    }
    CounterRng rng = root.split(static_cast<std::uint64_t>(c));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(train_fraction * n)), 1,
                                                 idx.size() - 1);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Split split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  const auto idx = split_indices(data, train_fraction, seed);
  Split out;
  for (auto i : idx.train) out.train.push_back(data[i]);
  for (auto i : idx.test) out.test.push_back(data[i]);
  return out;
}

template <typename T>
Tensor<T> batch_images(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) fail(ErrorKind::kShape, "batch_images: empty batch");
  const Shape shape = data.at(indices.front()).image.shape();
  Shape out_shape{indices.size()};
  out_shape.insert(out_shape.end(), shape.begin(), shape.end());
  Tensor<T> out(out_shape);
  const std::size_t per = data.at(indices.front()).image.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = data.at(indices[b]).image;
    if (img.shape() != shape) fail(ErrorKind::kShape, "batch_images: sample " + std::to_string(indices[b]) + " has a different shape");
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] = static_cast<T>(img[i]);
  }
  return out;
}

template <typename T>
Tensor<T> batch_labels(const Dataset& data, const std::vector<std::size_t>& indices) {
  Tensor<T> out({indices.size()});
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = static_cast<T>(data.at(indices[b]).label);
  return out;
}

template Tensor<float> batch_images(const Dataset&, const std::vector<std::size_t>&);
template Tensor<double> batch_images(const Dataset&, const std::vector<std::size_t>&);
template Tensor<float> batch_labels(const Dataset&, const std::vector<std::size_t>&);
template Tensor<double> batch_labels(const Dataset&, const std::vector<std::size_t>&);

std::uint64_t image_hash(const Tensor<float>& image) {
  std::uint64_t h = 1469598103934665603ull;
  for (float v : image.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {
constexpr std::string_view kDatasetMagic = "DBTD";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  if (data.empty()) fail(ErrorKind::kConfig, "save_dataset: empty dataset");
  const Shape shape = data.front().image.shape();
  if (shape.size() != 3) fail(ErrorKind::kShape, "save_dataset: images must be [C, H, W]");
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(num_classes(data)));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (const auto& s : data) {
    if (s.image.shape() != shape) fail(ErrorKind::kShape, "save_dataset: mixed image shapes");
    w.u32(static_cast<std::uint32_t>(s.label));
    for (float v : s.image.data()) w.f32(v);
  }
  w.save(path);
}

Dataset load_dataset(const std::string& path) {
  auto r = io::ByteReader::open(path, "dataset '" + path + "'");
  if (r.bytes(4) != kDatasetMagic) r.error("bad magic, expected DBTD");
  if (const auto v = r.u32(); v != kDatasetVersion) r.error("unsupported version " + std::to_string(v));
  const std::size_t count = r.u32(), classes = r.u32();
  const Shape shape{r.u32(), r.u32(), r.u32()};
  const std::size_t per = shape[0] * shape[1] * shape[2];
  if (count == 0 || per == 0) r.error("empty dataset");
  if (r.remaining() != count * (4 + 4 * per)) r.error("payload size does not match the header");
  Dataset out(count);
  for (auto& s : out) {
    s.label = r.u32();
    if (s.label >= classes) r.error("label " + std::to_string(s.label) + " out of range");
    s.image = Tensor<float>(shape);
    for (std::size_t i = 0; i < per; ++i) s.image[i] = r.f32();
  }
  r.expect_end();
  return out;
}

}  // namespace dbt::data
