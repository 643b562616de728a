#include "dbt/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dbt/engine/parallel.hpp"
#include "dbt/error.hpp"
#include "dbt/nn/optim.hpp"
#include "dbt/random.hpp"
#include "dbt/train/checkpoint.hpp"

namespace dbt::train {

namespace fs = std::filesystem;
using model::NetGraph;

namespace {

class ExecutionGuard {
 public:
  explicit ExecutionGuard(bool deterministic) : det_(dbt::deterministic()), threads_(num_threads()) {
    if (deterministic) {
      set_deterministic(true);
      set_num_threads(1);
    }
  }
  ~ExecutionGuard() {
    set_deterministic(det_);
    set_num_threads(threads_);
  }
  ExecutionGuard(const ExecutionGuard&) = delete;
  ExecutionGuard& operator=(const ExecutionGuard&) = delete;

 private:
  bool det_;
  std::size_t threads_;
};

bool all_finite(const Tensor<float>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

// First tapped node, in graph order, holding a non-finite value.
std::string locate_non_finite(const NetGraph<float>& net) {
  std::vector<std::pair<std::size_t, std::string>> taps;
  for (const auto& t : net.bn) taps.emplace_back(t.node.id, "block " + t.prefix + " (batch norm output)");
  for (const auto& t : net.dbt) {
    taps.emplace_back(t.sg_output.id, "block " + t.block + " (semantic-grouping features)");
    taps.emplace_back(t.grouping_loss.id, "block " + t.block + " (grouping loss)");
  }
  std::sort(taps.begin(), taps.end());
  for (const auto& [id, what] : taps) {
    if (!all_finite(net.graph.value(Var{id}))) return what;
  }
  return "classifier (cross-entropy)";
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::size_t argmax_row(const Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (logits[row * k + j] > logits[row * k + best]) best = j;
  }
  return best;
}

}  // namespace

std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", m.epoch, m.loss_c, m.loss_g_sum, m.lr, m.train_acc,
                m.test_acc);
  return buf;
}

EvalMetrics evaluate_model(const model::Model<float>& m, const data::Dataset& data, std::size_t batch_size) {
  if (data.empty()) fail(ErrorKind::kConfig, "evaluate: empty dataset");
  if (batch_size == 0) fail(ErrorKind::kConfig, "evaluate: batch_size must be >= 1");
  const std::size_t classes = m.descriptor.head.classes;
  for (const auto& s : data) {
    if (s.label >= classes) {
      fail(ErrorKind::kConfig, "evaluate: label " + std::to_string(s.label) + " exceeds the model's " +
                                   std::to_string(classes) + " classes");
    }
  }
  auto net = model::build_graph<float>(m.descriptor, nn::BnMode::kEval, true);
  auto b = m.bindings();
  EvalMetrics r;
  r.samples = data.size();
  std::vector<double> gl(net.dbt.size(), 0.0);
  std::size_t correct = 0;
  double lc = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    b[model::kInputName] = data::batch_images<float>(data, idx);
    b[model::kLabelsName] = data::batch_labels<float>(data, idx);
    const auto out = net.graph.evaluate(b);
    const auto& logits = out.at("logits");
    const auto n = static_cast<double>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) correct += argmax_row(logits, i) == data[idx[i]].label;
    lc += n * out.at("loss_c")[0];
    for (std::size_t k = 0; k < net.dbt.size(); ++k) gl[k] += n * net.graph.value(net.dbt[k].grouping_loss)[0];
  }
  const auto total = static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / total;
  r.loss_c = lc / total;
  for (std::size_t k = 0; k < net.dbt.size(); ++k) r.grouping_loss.emplace_back(net.dbt[k].block, gl[k] / total);
  return r;
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  ExecutionGuard guard(cfg.deterministic);

  const data::Dataset all = load_or_generate(cfg);
  auto desc = cfg.resolved_descriptor();
  desc.head.classes = data::num_classes(all);
  desc.validate();
  const auto parts = data::split(all, cfg.train_fraction, cfg.dataset.seed);
  const std::size_t steps_per_epoch = parts.train.size() / cfg.batch_size;
  if (steps_per_epoch == 0) {
    fail(ErrorKind::kConfig, "config: batch_size " + std::to_string(cfg.batch_size) + " exceeds the " +
                                 std::to_string(parts.train.size()) + "-sample training split");
  }

  TrainResult res;
  res.run_dir = cfg.output_dir;
  res.model = model::build_network<float>(desc, desc.head.classes, cfg.seed);
  auto& m = res.model;

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  const fs::path dir(cfg.output_dir);
  TrainConfig resolved = cfg;
  resolved.inline_descriptor = desc;
  resolved.descriptor = desc.name;
  save_config(resolved, (dir / "config.json").string());
  save_checkpoint(m, (dir / "initial.dbtc").string());
  const std::string metrics_path = (dir / "metrics.csv").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) fail(ErrorKind::kIo, "cannot write '" + metrics_path + "'");
  metrics << kMetricsHeader << "\n" << std::flush;

  auto sgd = cfg.sgd;
  sgd.total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
  nn::SgdCosine<float> opt(sgd);
  auto net = model::build_graph<float>(desc, nn::BnMode::kTrain, true);
  const CounterRng shuffle_root = CounterRng(cfg.seed).split("shuffle");

  double best_acc = -1;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = iota(parts.train.size());
    CounterRng rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s * cfg.batch_size),
                                         order.begin() + static_cast<std::ptrdiff_t>((s + 1) * cfg.batch_size));
      auto b = m.bindings();
      b[model::kInputName] = data::batch_images<float>(parts.train, idx);
      b[model::kLabelsName] = data::batch_labels<float>(parts.train, idx);
      const auto out = net.graph.evaluate(b);
      const double total = out.at("total_loss")[0];
      if (!std::isfinite(total)) {
        fail(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(s + 1) +
                                      ": " + locate_non_finite(net));
      }
      em.loss_c += out.at("loss_c")[0];
      em.loss_g_sum += out.at("loss_g_sum")[0];
      const auto grads = net.graph.gradients(net.total_loss);
      model::update_running_stats(net, m);
      em.lr = opt.step(m.params, grads, step++);
    }
    em.loss_c /= static_cast<double>(steps_per_epoch);
    em.loss_g_sum /= static_cast<double>(steps_per_epoch);
    em.train_acc = evaluate_model(m, parts.train, cfg.eval_batch_size).accuracy;
    em.test_acc = evaluate_model(m, parts.test, cfg.eval_batch_size).accuracy;
    metrics << metrics_row(em) << "\n" << std::flush;
    if (em.test_acc > best_acc) {
      best_acc = em.test_acc;
      res.best_epoch = epoch;
      save_checkpoint(m, (dir / "best.dbtc").string());
    }
    res.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  if (!metrics) fail(ErrorKind::kIo, "failed writing '" + metrics_path + "'");
  if (cfg.epochs > 0) save_checkpoint(m, (dir / "final.dbtc").string());
  return res;
}

}  // namespace dbt::train
