#include <benchmark/benchmark.h>

#include "dbt/bilinear/block.hpp"
#include "dbt/bilinear/group_bilinear.hpp"
#include "dbt/model/network.hpp"
#include "dbt/nn/layers.hpp"
#include "dbt/random.hpp"
#include "dbt/zoo/bilinear.hpp"

using namespace dbt;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  CounterRng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

bilinear::DbtConfig config(std::size_t channels, std::size_t groups, bool encoding) {
  bilinear::DbtConfig c;
  c.channels = channels;
  c.groups = groups;
  c.use_encoding = encoding;
  return c;
}

// 64 channels on a 16x16 map; the work per position falls as 1/G.
void BM_GroupBilinear(benchmark::State& state) {
  const auto groups = static_cast<std::size_t>(state.range(0));
  const auto c = config(64, groups, true);
  const auto enc = bilinear::group_index_encoding<float>(c);
  const auto x = random_tensor({8, 64, 16, 16}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear::group_bilinear<float>(x, c, &enc));
  state.SetItemsProcessed(state.iterations() * 8 * 256);
}
BENCHMARK(BM_GroupBilinear)->Arg(1)->Arg(4)->Arg(8)->Arg(16);

void BM_BilinearPool(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({n, 196}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(zoo::bilinear_pool(x));
}
BENCHMARK(BM_BilinearPool)->Arg(64)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  nn::ConvParams<float> p{random_tensor({ch, ch, 3, 3}, 3), std::nullopt, 1, 1};
  const auto x = random_tensor({8, ch, 16, 16}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * 8 * 256 * ch * ch * 9);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64);

void BM_DbtBlockForward(benchmark::State& state) {
  const auto c = config(64, 8, true);
  auto p = bilinear::DbtBlockParams<float>::init(64, c, 5);
  const auto x = random_tensor({8, 64, 16, 16}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear::dbt_block_forward(x, p, c, nn::BnMode::kEval));
}
BENCHMARK(BM_DbtBlockForward);

// One forward and backward pass of the small network on a 32-image batch.
void BM_TinyTrainStep(benchmark::State& state) {
  const auto m = model::build_network<float>(model::preset("dbtnet-tiny"), 8, 7);
  auto net = model::build_graph<float>(m.descriptor, nn::BnMode::kTrain, true);
  auto b = m.bindings();
  b[model::kInputName] = random_tensor({32, 3, 64, 64}, 8);
  Tensor<float> labels({32});
  for (std::size_t i = 0; i < 32; ++i) labels[i] = static_cast<float>(i % 8);
  b[model::kLabelsName] = labels;
  for (auto _ : state) {
    net.graph.evaluate(b);
    benchmark::DoNotOptimize(net.graph.gradients(net.total_loss));
  }
}
BENCHMARK(BM_TinyTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
