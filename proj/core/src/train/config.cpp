#include "dbt/train/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "common/json_reader.hpp"
#include "dbt/error.hpp"

namespace dbt::train {

using jsonio::json;
using jsonio::Reader;

namespace {

void bad(const std::string& what) { fail(ErrorKind::kConfig, "config: " + what); }

json dataset_to_json(const data::DatasetSpec& s) {
  return json{{"classes", s.classes},
              {"samples_per_class", s.samples_per_class},
              {"image_size", s.image_size},
              {"parts_per_image", s.parts_per_image},
              {"texture_bank_size", s.texture_bank_size},
              {"noise_std", s.noise_std},
              {"seed", s.seed}};
}

data::DatasetSpec dataset_from_json(const json& j) {
  Reader r(j, "dataset");
  data::DatasetSpec s;
  s.classes = r.get_or<std::size_t>("classes", s.classes);
  s.samples_per_class = r.get_or<std::size_t>("samples_per_class", s.samples_per_class);
  s.image_size = r.get_or<std::size_t>("image_size", s.image_size);
  s.parts_per_image = r.get_or<std::size_t>("parts_per_image", s.parts_per_image);
  s.texture_bank_size = r.get_or<std::size_t>("texture_bank_size", s.texture_bank_size);
  s.noise_std = r.get_or<double>("noise_std", s.noise_std);
  s.seed = r.get_or<std::size_t>("seed", s.seed);
  r.finish();
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (descriptor.empty() && !inline_descriptor) bad("descriptor is empty");
  if (dataset_path.empty()) {
    try {
      dataset.validate();
    } catch (const Error& e) {
      bad(e.what());
    }
  }
  if (!(train_fraction > 0 && train_fraction < 1)) bad("train_fraction must be in (0, 1)");
  if (batch_size < 2) bad("batch_size must be >= 2 for train-mode batch norm, got " + std::to_string(batch_size));
  if (eval_batch_size < 1) bad("eval_batch_size must be >= 1");
  if (!(lambda >= 0) || !std::isfinite(lambda)) bad("lambda must be finite and >= 0");
  if (!(t > 0) || !std::isfinite(t)) bad("t must be finite and > 0");
  if (output_dir.empty()) bad("output_dir is empty");
  auto s = sgd;
  s.total_steps = 1;
  try {
    s.validate();
  } catch (const Error& e) {
    bad(e.what());
  }
}

model::ArchDescriptor TrainConfig::resolved_descriptor() const {
  auto d = inline_descriptor ? *inline_descriptor : model::resolve_descriptor(descriptor);
  if (!dbt_stages.empty()) d = model::with_dbt_stages(d, dbt_stages);
  model::for_each_dbt(d, [&](bilinear::DbtConfig& c) {
    c.grouping_loss_weight = lambda;
    c.t = t;
    c.use_encoding = use_encoding;
    c.use_shortcut = use_shortcut;
  });
  d.validate();
  return d;
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  if (c.inline_descriptor) {
    j["descriptor"] = json::parse(model::descriptor_to_json(*c.inline_descriptor));
  } else {
    j["descriptor"] = c.descriptor;
  }
  j["dataset"] = dataset_to_json(c.dataset);
  j["dataset_path"] = c.dataset_path;
  j["train_fraction"] = c.train_fraction;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["eval_batch_size"] = c.eval_batch_size;
  j["sgd"] = {{"lr_max", c.sgd.lr_max},
              {"lr_min", c.sgd.lr_min},
              {"momentum", c.sgd.momentum},
              {"weight_decay", c.sgd.weight_decay}};
  j["lambda"] = c.lambda;
  j["t"] = c.t;
  j["use_encoding"] = c.use_encoding;
  j["use_shortcut"] = c.use_shortcut;
  j["dbt_stages"] = c.dbt_stages;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["deterministic"] = c.deterministic;
  return j.dump(2) + "\n";
}

TrainConfig config_from_json(const std::string& text) {
  const json j = jsonio::parse(text, "config is not valid JSON");
  Reader r(j, "config");
  TrainConfig c;
  if (const json* d = r.find("descriptor")) {
    if (d->is_string()) {
      c.descriptor = d->get<std::string>();
    } else {
      c.inline_descriptor = model::descriptor_from_json(d->dump());
      c.descriptor = c.inline_descriptor->name;
    }
  }
  if (const json* d = r.find("dataset")) c.dataset = dataset_from_json(*d);
  c.dataset_path = r.get_or<std::string>("dataset_path", c.dataset_path);
  c.train_fraction = r.get_or<double>("train_fraction", c.train_fraction);
  c.epochs = r.get_or<std::size_t>("epochs", c.epochs);
  c.batch_size = r.get_or<std::size_t>("batch_size", c.batch_size);
  c.eval_batch_size = r.get_or<std::size_t>("eval_batch_size", c.eval_batch_size);
  if (const json* s = r.find("sgd")) {
    Reader sr(*s, "sgd");
    c.sgd.lr_max = sr.get_or<double>("lr_max", c.sgd.lr_max);
    c.sgd.lr_min = sr.get_or<double>("lr_min", c.sgd.lr_min);
    c.sgd.momentum = sr.get_or<double>("momentum", c.sgd.momentum);
    c.sgd.weight_decay = sr.get_or<double>("weight_decay", c.sgd.weight_decay);
    sr.finish();
  }
  c.lambda = r.get_or<double>("lambda", c.lambda);
  c.t = r.get_or<double>("t", c.t);
  c.use_encoding = r.get_or<bool>("use_encoding", c.use_encoding);
  c.use_shortcut = r.get_or<bool>("use_shortcut", c.use_shortcut);
  if (const json* s = r.find("dbt_stages")) {
    if (!s->is_array()) fail(ErrorKind::kFormat, "config: 'dbt_stages' must be an array of strings");
    for (const auto& v : *s) {
      if (!v.is_string()) fail(ErrorKind::kFormat, "config: 'dbt_stages' must be an array of strings");
      c.dbt_stages.push_back(v.get<std::string>());
    }
  }
  c.seed = r.get_or<std::size_t>("seed", c.seed);
  c.output_dir = r.get_or<std::string>("output_dir", c.output_dir);
  c.deterministic = r.get_or<bool>("deterministic", c.deterministic);
  r.finish();
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write config file '" + path + "'");
  out << config_to_json(cfg);
  if (!out) fail(ErrorKind::kIo, "failed writing config file '" + path + "'");
}

void Overrides::apply(TrainConfig& cfg) const {
  if (lambda) cfg.lambda = *lambda;
  if (t) cfg.t = *t;
  if (no_encoding) cfg.use_encoding = false;
  if (no_shortcut) cfg.use_shortcut = false;
  if (stages) cfg.dbt_stages = *stages;
  if (seed) cfg.seed = *seed;
  if (deterministic) cfg.deterministic = true;
  if (epochs) cfg.epochs = *epochs;
  if (output_dir) cfg.output_dir = *output_dir;
  cfg.validate();
}

std::vector<std::string> parse_stage_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) bad("empty stage name in '" + text + "'");
    out.push_back(item);
  }
  if (out.empty()) bad("stage list is empty");
  return out;
}

data::Dataset load_or_generate(const TrainConfig& cfg) {
  return cfg.dataset_path.empty() ? data::generate_dataset(cfg.dataset) : data::load_dataset(cfg.dataset_path);
}

}  // namespace dbt::train
