#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dbt/data/synth.hpp"
#include "dbt/error.hpp"

using namespace dbt;
using namespace dbt::data;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.classes = 8;
  s.samples_per_class = 10;
  s.image_size = 32;
  s.seed = 4;
  return s;
}

std::multiset<std::size_t> texture_ids(const Sample& s) {
  std::multiset<std::size_t> ids;
  for (const auto& p : s.part_layout) ids.insert(p.texture);
  return ids;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dbt_synth_" + name)).string();
}

// Multinomial logistic regression by full-batch gradient descent.
struct Softmax {
  std::size_t classes, dims;
  std::vector<double> w;  // [classes, dims + 1]

  Softmax(std::size_t c, std::size_t d) : classes(c), dims(d), w(c * (d + 1), 0.0) {}

  std::vector<double> probs(const std::vector<double>& x) const {
    std::vector<double> z(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      z[k] = w[k * (dims + 1) + dims];
      for (std::size_t j = 0; j < dims; ++j) z[k] += w[k * (dims + 1) + j] * x[j];
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (auto& v : z) s += (v = std::exp(v - m));
    for (auto& v : z) v /= s;
    return z;
  }

  void fit(const std::vector<std::vector<double>>& xs, const std::vector<std::size_t>& ys, int iters, double lr) {
    for (int it = 0; it < iters; ++it) {
      std::vector<double> g(w.size(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        auto p = probs(xs[i]);
        p[ys[i]] -= 1;
        for (std::size_t k = 0; k < classes; ++k) {
          for (std::size_t j = 0; j < dims; ++j) g[k * (dims + 1) + j] += p[k] * xs[i][j];
          g[k * (dims + 1) + dims] += p[k];
        }
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i] / static_cast<double>(xs.size());
    }
  }

  std::size_t predict(const std::vector<double>& x) const {
    const auto p = probs(x);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

}  // namespace

TEST(SynthData, CountsPerLabel) {
  DatasetSpec s;
  s.seed = 1;
  const auto d = generate_dataset(s);
  ASSERT_EQ(d.size(), 800u);
  std::vector<std::size_t> per(8, 0);
  for (const auto& x : d) ++per.at(x.label);
  for (auto n : per) EXPECT_EQ(n, 100u);
  for (const auto& x : d) {
    EXPECT_EQ(x.image.shape(), (Shape{3, 64, 64}));
    for (float v : x.image.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(SynthData, SameSeedIsByteIdentical) {
  const auto a = generate_dataset(small_spec()), b = generate_dataset(small_spec());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(image_hash(a[i].image), image_hash(b[i].image));
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].part_layout, b[i].part_layout);
  }
  auto other = small_spec();
  other.seed = 5;
  EXPECT_NE(generate_dataset(other)[0].image, a[0].image);
}

TEST(SynthData, ClassIsTextureCombination) {
  auto s = small_spec();
  s.noise_std = 0;
  const auto d = generate_dataset(s);
  const auto combos = class_textures(s);
  for (const auto& x : d) {
    const auto& c = combos[x.label];
    EXPECT_EQ(texture_ids(x), std::multiset<std::size_t>(c.begin(), c.end()));
  }
  // two samples of one class: same textures, different layouts
  EXPECT_EQ(texture_ids(d[0]), texture_ids(d[8]));
  EXPECT_NE(d[0].part_layout, d[8].part_layout);
  EXPECT_NE(d[0].image, d[8].image);
}

TEST(SynthData, TexturesAreShared) {
  // no single texture identifies a class; every texture is in >= 2 classes
  const auto combos = class_textures(small_spec());
  std::set<std::vector<std::size_t>> unique(combos.begin(), combos.end());
  EXPECT_EQ(unique.size(), combos.size());
  std::vector<int> uses(8, 0);
  for (const auto& c : combos) {
    for (auto t : c) ++uses.at(t);
  }
  for (int u : uses) EXPECT_EQ(u, 2);
}

TEST(SynthData, PartsDoNotOverlap) {
  for (const auto& x : generate_dataset(small_spec())) {
    const auto& p = x.part_layout;
    ASSERT_EQ(p.size(), 2u);
    EXPECT_GT(std::hypot(p[0].cx - p[1].cx, p[0].cy - p[1].cy), p[0].radius + p[1].radius);
    for (const auto& q : p) {
      EXPECT_GE(q.cx - q.radius, 0.0);
      EXPECT_LE(q.cx + q.radius, 32.0);
    }
  }
}

TEST(SynthData, InvalidSpecs) {
  auto s = small_spec();
  s.image_size = 48;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.classes = 1;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.parts_per_image = 1;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.classes = 29;  // C(8, 2) = 28
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.parts_per_image = 14;  // more disc area than the image holds
  s.classes = 2;
  s.texture_bank_size = 15;
  try {
    generate_sample(s, 0);
    FAIL() << "too dense";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("non-overlapping"), std::string::npos);
  }
}

TEST(SynthData, SplitHalves) {
  DatasetSpec s;
  s.image_size = 32;
  s.seed = 2;
  const auto d = generate_dataset(s);
  const auto sp = split(d, 0.5, 7);
  std::vector<std::size_t> tr(8, 0), te(8, 0);
  for (const auto& x : sp.train) ++tr[x.label];
  for (const auto& x : sp.test) ++te[x.label];
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(tr[c], 50u);
    EXPECT_EQ(te[c], 50u);
  }
}

TEST(SynthData, SplitIsPartition) {
  const auto d = generate_dataset(small_spec());
  const auto a = split_indices(d, 0.8, 1), b = split_indices(d, 0.8, 2);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(a.train.size(), b.train.size());
  EXPECT_NE(a.train, b.train);
  EXPECT_EQ(split_indices(d, 0.8, 1).train, a.train);

  std::set<std::uint64_t> train_hashes;
  for (auto i : a.train) train_hashes.insert(image_hash(d[i].image));
  for (auto i : a.test) EXPECT_EQ(train_hashes.count(image_hash(d[i].image)), 0u);
}

TEST(SynthData, SplitErrors) {
  const auto d = generate_dataset(small_spec());
  EXPECT_THROW(split_indices(d, 0.0, 1), Error);
  EXPECT_THROW(split_indices(d, 1.0, 1), Error);
  Dataset tiny(d.begin(), d.begin() + 8);  // one sample per class
  EXPECT_THROW(split_indices(tiny, 0.5, 1), Error);
}

TEST(SynthData, PositionsCarryNoLabel) {
  DatasetSpec s;
  s.seed = 3;
  s.image_size = 32;
  const auto d = generate_dataset(s);
  const auto sp = split_indices(d, 0.8, 0);
  auto features = [&](std::size_t i) {
    std::vector<double> f;
    for (const auto& p : d[i].part_layout) {
      f.push_back(p.cx / 32.0 - 0.5);
      f.push_back(p.cy / 32.0 - 0.5);
    }
    return f;
  };
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> ys;
  for (auto i : sp.train) {
    xs.push_back(features(i));
    ys.push_back(d[i].label);
  }
  Softmax model(8, 4);
  model.fit(xs, ys, 300, 1.0);
  std::size_t correct = 0;
  for (auto i : sp.test) correct += model.predict(features(i)) == d[i].label;
  const double acc = static_cast<double>(correct) / static_cast<double>(sp.test.size());
  EXPECT_LE(acc, 1.0 / 8 + 0.10);
}

TEST(SynthData, BatchStacking) {
  const auto d = generate_dataset(small_spec());
  const auto x = batch_images<double>(d, {3, 5});
  EXPECT_EQ(x.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(x[3 * 32 * 32], static_cast<double>(d[5].image[0]));
  const auto y = batch_labels<float>(d, {3, 5, 9});
  EXPECT_EQ(y, Tensor<float>({3}, {3, 5, 1}));
}

TEST(SynthData, ContainerRoundTrip) {
  const auto d = generate_dataset(small_spec());
  const auto path = temp_path("roundtrip.bin");
  save_dataset(d, path);
  EXPECT_EQ(std::filesystem::file_size(path), 28 + d.size() * (4 + 4 * 3 * 32 * 32));
  const auto back = load_dataset(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].label, d[i].label);
    EXPECT_EQ(back[i].image, d[i].image);
    EXPECT_TRUE(back[i].part_layout.empty());
  }
  std::filesystem::remove(path);
}

TEST(SynthData, ContainerRejectsCorruption) {
  const auto d = generate_dataset(small_spec());
  const auto path = temp_path("corrupt.bin");
  save_dataset(d, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XBTD", 4);
  }
  try {
    load_dataset(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
  save_dataset(d, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(load_dataset(path), Error);
  std::filesystem::remove(path);
  try {
    load_dataset(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}
