// dbtnet: train, evaluate, and inspect deep bilinear transformation networks.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dbt/data/synth.hpp"
#include "dbt/error.hpp"
#include "dbt/model/cost.hpp"
#include "dbt/train/checkpoint.hpp"
#include "dbt/train/config.hpp"
#include "dbt/train/interactions.hpp"
#include "dbt/train/trainer.hpp"

namespace {

using namespace dbt;

struct CommonArgs {
  std::string config;
  std::optional<double> lambda;
  std::optional<double> t;
  bool no_encoding = false;
  bool no_shortcut = false;
  std::string stages;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration (defaults apply when omitted)");
    app->add_option("--lambda", lambda, "grouping loss weight for every DBT block");
    app->add_option("--t", t, "group index encoding frequency");
    app->add_flag("--no-encoding", no_encoding, "disable group index encoding");
    app->add_flag("--no-shortcut", no_shortcut, "disable the DBT block shortcut");
    app->add_option("--stages", stages, "comma-separated stages carrying DBT, e.g. IV,V or V,last");
    app->add_option("--seed", seed, "model initialisation and shuffling seed");
    app->add_flag("--deterministic", deterministic, "force single-threaded bit-reproducible execution");
  }

  train::TrainConfig load(train::Overrides extra = {}) const {
    train::TrainConfig cfg = config.empty() ? train::TrainConfig{} : train::load_config(config);
    extra.lambda = lambda;
    extra.t = t;
    extra.no_encoding = no_encoding;
    extra.no_shortcut = no_shortcut;
    if (!stages.empty()) extra.stages = train::parse_stage_list(stages);
    extra.seed = seed;
    extra.deterministic = deterministic;
    extra.apply(cfg);
    return cfg;
  }
};

data::Dataset select_split(const train::TrainConfig& cfg, const std::string& which) {
  auto all = train::load_or_generate(cfg);
  if (which == "all") return all;
  auto parts = data::split(all, cfg.train_fraction, cfg.dataset.seed);
  if (which == "train") return parts.train;
  if (which == "test") return parts.test;
  fail(ErrorKind::kConfig, "unknown split '" + which + "', expected train, test, or all");
}

model::Model<float> load_model(const train::TrainConfig& cfg, const data::Dataset& data, const std::string& checkpoint) {
  auto desc = cfg.resolved_descriptor();
  desc.head.classes = cfg.dataset_path.empty() ? cfg.dataset.classes : data::num_classes(data);
  auto m = model::build_network<float>(desc, desc.head.classes, cfg.seed);
  train::load_checkpoint(m, checkpoint);
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out + "\"";
}

int report_error(const std::string& kind, const std::string& message) {
  std::cerr << "error: kind=" << kind << " message=" << quoted(message) << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep bilinear transformation networks: training, evaluation, and analysis"};
  app.require_subcommand(1);

  CommonArgs train_args;
  std::optional<std::size_t> epochs;
  std::optional<std::string> output;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  train_args.attach(train_cmd);
  train_cmd->add_option("--epochs", epochs, "number of epochs");
  train_cmd->add_option("--output", output, "run directory");
  train_cmd->add_flag("--quiet", quiet, "do not print per-epoch metrics");

  CommonArgs eval_args;
  std::string eval_ckpt, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_args.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "train, test, or all");

  CommonArgs cost_args;
  std::string cost_descriptor;
  std::optional<std::size_t> cost_size;
  bool cost_json = false;
  auto* cost_cmd = app.add_subcommand("cost", "print parameter and FLOP counts");
  cost_args.attach(cost_cmd);
  cost_cmd->add_option("--descriptor", cost_descriptor, "preset name or descriptor file (overrides the config)");
  cost_cmd->add_option("--size", cost_size, "square input size (defaults to the dataset image size)");
  cost_cmd->add_flag("--json", cost_json, "machine-readable output");

  CommonArgs inter_args;
  std::string inter_ckpt, inter_stage, inter_out, inter_format = "csv", inter_split = "all";
  auto* inter_cmd = app.add_subcommand("interactions", "average channel interaction matrix of a stage");
  inter_args.attach(inter_cmd);
  inter_cmd->add_option("--checkpoint", inter_ckpt, "checkpoint file")->required();
  inter_cmd->add_option("--stage", inter_stage, "stage id, e.g. IV")->required();
  inter_cmd->add_option("--split", inter_split, "train, test, or all");
  inter_cmd->add_option("--out", inter_out, "write the matrix to this file");
  inter_cmd->add_option("--format", inter_format, "csv or pgm");

  CommonArgs gen_args;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "write the configured synthetic dataset to a container file");
  gen_args.attach(gen_cmd);
  gen_cmd->add_option("--out", gen_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*train_cmd) {
      train::Overrides extra;
      extra.epochs = epochs;
      extra.output_dir = output;
      const auto cfg = train_args.load(extra);
      if (!quiet) std::cout << train::kMetricsHeader << std::endl;
      const auto res = train::train(cfg, [&](const train::EpochMetrics& m) {
        if (!quiet) std::cout << train::metrics_row(m) << std::endl;
      });
      std::cout << "run directory: " << res.run_dir << "\n";
    } else if (*eval_cmd) {
      const auto cfg = eval_args.load();
      const auto data = select_split(cfg, eval_split);
      const auto m = load_model(cfg, data, eval_ckpt);
      const auto r = train::evaluate_model(m, data, cfg.eval_batch_size);
      std::cout << "{\"split\": " << quoted(eval_split) << ", \"samples\": " << r.samples
                << ", \"accuracy\": " << fmt(r.accuracy) << ", \"loss_c\": " << fmt(r.loss_c) << ", \"grouping_loss\": {";
      for (std::size_t i = 0; i < r.grouping_loss.size(); ++i) {
        std::cout << (i ? ", " : "") << quoted(r.grouping_loss[i].first) << ": " << fmt(r.grouping_loss[i].second);
      }
      std::cout << "}}\n";
    } else if (*cost_cmd) {
      auto cfg = cost_args.load();
      if (!cost_descriptor.empty()) {
        cfg.descriptor = cost_descriptor;
        cfg.inline_descriptor.reset();
      }
      const auto desc = cfg.resolved_descriptor();
      const std::size_t size = cost_size.value_or(cfg.dataset.image_size);
      const auto report = model::count_flops(desc, size);
      std::cout << (cost_json ? model::cost_report_json(desc, size, report) : model::cost_report_text(desc, size, report));
    } else if (*inter_cmd) {
      const auto cfg = inter_args.load();
      const auto data = select_split(cfg, inter_split);
      const auto m = load_model(cfg, data, inter_ckpt);
      const auto r = train::interaction_matrix(m, data, inter_stage, cfg.eval_batch_size);
      if (!inter_out.empty()) train::export_matrix(r, inter_out, train::parse_matrix_format(inter_format));
      std::cout << "{\"stage\": " << quoted(r.stage) << ", \"samples\": " << r.samples << ", \"channels\": "
                << r.m.dim(0) << ", \"groups\": " << r.groups << ", \"mean_intra\": " << fmt(r.mean_intra)
                << ", \"mean_inter\": " << fmt(r.mean_inter) << "}\n";
    } else if (*gen_cmd) {
      auto cfg = gen_args.load();
      if (gen_args.seed) cfg.dataset.seed = *gen_args.seed;
      const auto data = data::generate_dataset(cfg.dataset);
      data::save_dataset(data, gen_out);
      std::cout << "wrote " << data.size() << " samples to " << gen_out << "\n";
    }
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
