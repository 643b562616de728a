#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dbt/data/synth.hpp"
#include "dbt/model/network.hpp"
#include "dbt/train/config.hpp"

namespace dbt::train {

struct EpochMetrics {
  std::size_t epoch = 0;   // 1-based
  double loss_c = 0;       // mean over the epoch's training batches
  double loss_g_sum = 0;   // mean over batches of the summed grouping losses
  double lr = 0;           // learning rate of the epoch's last step
  double train_acc = 0;    // eval-mode accuracy on the training split
  double test_acc = 0;
};

/// Fixed header of metrics.csv.
inline constexpr const char* kMetricsHeader = "epoch,loss_c,loss_g_sum,lr,train_acc,test_acc";
std::string metrics_row(const EpochMetrics& m);

struct TrainResult {
  std::string run_dir;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  model::Model<float> model;   // final weights
};

/// Trains with L = L_c + sum_b lambda_b L_g^(b) and writes into
/// cfg.output_dir: config.json, metrics.csv, initial.dbtc and, when at least
/// one epoch ran, final.dbtc and best.dbtc (highest test accuracy, earliest
/// on ties). Throws kNumeric naming the first block with a non-finite value.
TrainResult train(const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct EvalMetrics {
  std::size_t samples = 0;
  double accuracy = 0;
  double loss_c = 0;
  /// Mean grouping loss of each DBT block, in network order.
  std::vector<std::pair<std::string, double>> grouping_loss;
};

/// Eval-mode BN; the result does not depend on batch_size.
EvalMetrics evaluate_model(const model::Model<float>& m, const data::Dataset& data, std::size_t batch_size = 80);

}  // namespace dbt::train
