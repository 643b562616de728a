#include "dbt/model/arch.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "common/checks.hpp"
#include "common/json_reader.hpp"

namespace dbt::model {

using json = nlohmann::ordered_json;
using jsonio::Reader;
using bilinear::DbtConfig;

namespace {

void config_error(const std::string& what) { fail(ErrorKind::kConfig, "descriptor: " + what); }

void check_dbt(const DbtConfig& c, std::size_t channels, const std::string& where) {
  if (c.channels != channels) {
    config_error(where + " DBT channels " + std::to_string(c.channels) + " != block width " + std::to_string(channels));
  }
  try {
    c.validate();
  } catch (const Error& e) {
    config_error(where + ": " + e.what());
  }
}

json dbt_to_json(const DbtConfig& c) {
  return json{{"groups", c.groups},
              {"t", c.t},
              {"use_encoding", c.use_encoding},
              {"use_shortcut", c.use_shortcut},
              {"lambda", c.grouping_loss_weight},
              {"normalize_loss", c.normalize_grouping_loss}};
}

DbtConfig dbt_from_json(const json& j, std::size_t channels, const std::string& where) {
  Reader r(j, where);
  DbtConfig c;
  c.channels = channels;
  c.groups = r.get<std::size_t>("groups");
  c.t = r.get_or<double>("t", c.t);
  c.use_encoding = r.get_or<bool>("use_encoding", c.use_encoding);
  c.use_shortcut = r.get_or<bool>("use_shortcut", c.use_shortcut);
  c.grouping_loss_weight = r.get_or<double>("lambda", c.grouping_loss_weight);
  c.normalize_grouping_loss = r.get_or<bool>("normalize_loss", c.normalize_grouping_loss);
  r.finish();
  return c;
}

DbtConfig dbt_cfg(std::size_t n, std::size_t g) {
  DbtConfig c;
  c.channels = n;
  c.groups = g;
  return c;
}

StageSpec stage(std::string name, BlockType b, std::size_t repeat, std::size_t width, std::size_t out,
                std::size_t stride, std::size_t groups) {
  return {std::move(name), b, repeat, width, out, stride, dbt_cfg(width, groups)};
}

ArchDescriptor resnet_like(std::string name, BlockType b, std::size_t stage4_repeat) {
  ArchDescriptor d;
  d.name = std::move(name);
  d.stem = {7, 64, 2, 3, true};
  d.stages = {stage("II", b, 3, 64, 256, 1, 8), stage("III", b, 4, 128, 512, 2, 8),
              stage("IV", b, stage4_repeat, 256, 1024, 2, 16), stage("V", b, 3, 512, 2048, 2, 16)};
  d.head.classes = 1000;
  return d;
}

ArchDescriptor tiny(std::string name, BlockType b) {
  ArchDescriptor d;
  d.name = std::move(name);
  d.stem = {3, 16, 2, 1, true};
  d.stages = {stage("IV", b, 2, 16, 64, 1, 4), stage("V", b, 2, 64, 256, 2, 8)};
  d.head.classes = 8;
  d.head.last_dbt = dbt_cfg(256, 16);
  return d;
}

}  // namespace

std::string to_string(BlockType t) { return t == BlockType::kDbt ? "dbt" : "plain"; }

void ArchDescriptor::validate() const {
  if (name.empty()) config_error("name is empty");
  if (input_channels == 0) config_error("input_channels must be positive");
  if (stem.kernel != 1 && stem.kernel != 3 && stem.kernel != 7) {
    config_error("stem kernel must be 1, 3 or 7, got " + std::to_string(stem.kernel));
  }
  if (stem.channels == 0 || stem.stride == 0) config_error("stem channels and stride must be positive");
  if (stages.empty()) config_error("at least one stage is required");
  std::set<std::string> names;
  for (const auto& s : stages) {
    const std::string where = "stage '" + s.name + "'";
    if (s.name.empty() || s.name == "last") config_error("stage names must be non-empty and not 'last'");
    if (!names.insert(s.name).second) config_error("duplicate " + where);
    if (s.repeat == 0 || s.width == 0 || s.out == 0 || s.stride == 0) {
      config_error(where + ": repeat, width, out and stride must be positive");
    }
    if (s.block == BlockType::kDbt && !s.dbt) config_error(where + " is dbt but has no DBT settings");
    if (s.dbt) check_dbt(*s.dbt, s.width, where);
  }
  if (head.classes == 0) config_error("head classes must be positive");
  if (head.use_last_dbt && !head.last_dbt) config_error("last-layer DBT enabled without settings");
  if (head.last_dbt) check_dbt(*head.last_dbt, feature_channels(), "last-layer");
}

std::size_t ArchDescriptor::feature_channels() const { return stages.empty() ? stem.channels : stages.back().out; }

const StageSpec& ArchDescriptor::stage(const std::string& n) const {
  for (const auto& s : stages)
    if (s.name == n) return s;
  fail(ErrorKind::kConfig, "descriptor '" + name + "' has no stage '" + n + "'");
}

bool ArchDescriptor::has_dbt() const {
  return head.use_last_dbt ||
         std::any_of(stages.begin(), stages.end(), [](const StageSpec& s) { return s.block == BlockType::kDbt; });
}

std::string descriptor_to_json(const ArchDescriptor& d) {
  json j;
  j["name"] = d.name;
  j["input_channels"] = d.input_channels;
  j["stem"] = {{"kernel", d.stem.kernel},
               {"channels", d.stem.channels},
               {"stride", d.stem.stride},
               {"padding", d.stem.padding},
               {"max_pool", d.stem.max_pool}};
  j["stages"] = json::array();
  for (const auto& s : d.stages) {
    json js{{"name", s.name},       {"block", to_string(s.block)}, {"repeat", s.repeat},
            {"width", s.width},     {"out", s.out},                {"stride", s.stride}};
    js["dbt"] = s.dbt ? dbt_to_json(*s.dbt) : json(nullptr);
    j["stages"].push_back(std::move(js));
  }
  j["head"] = {{"classes", d.head.classes},
               {"use_last_dbt", d.head.use_last_dbt},
               {"last_dbt", d.head.last_dbt ? dbt_to_json(*d.head.last_dbt) : json(nullptr)}};
  return j.dump(2) + "\n";
}

ArchDescriptor descriptor_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, std::string("descriptor is not valid JSON: ") + e.what());
  }
  ArchDescriptor d;
  Reader r(j, "descriptor");
  d.name = r.get<std::string>("name");
  d.input_channels = r.get_or<std::size_t>("input_channels", 3);
  {
    const json* js = r.find("stem");
    if (!js) fail(ErrorKind::kFormat, "descriptor: missing key 'stem'");
    Reader s(*js, "stem");
    d.stem.kernel = s.get<std::size_t>("kernel");
    d.stem.channels = s.get<std::size_t>("channels");
    d.stem.stride = s.get_or<std::size_t>("stride", 1);
    d.stem.padding = s.get_or<std::size_t>("padding", d.stem.kernel / 2);
    d.stem.max_pool = s.get_or<bool>("max_pool", true);
    s.finish();
  }
  const json* stages = r.find("stages");
  if (!stages || !stages->is_array()) fail(ErrorKind::kFormat, "descriptor: 'stages' must be an array");
  for (const auto& js : *stages) {
    StageSpec st;
    if (!js.is_object() || !js.contains("name") || !js["name"].is_string()) {
      fail(ErrorKind::kFormat, "stage: missing string key 'name'");
    }
    Reader named(js, "stage '" + js["name"].get<std::string>() + "'");
    st.name = named.get<std::string>("name");
    const auto block = named.get<std::string>("block");
    if (block != "plain" && block != "dbt") {
      fail(ErrorKind::kFormat, "stage '" + st.name + "': block must be 'plain' or 'dbt', got '" + block + "'");
    }
    st.block = block == "dbt" ? BlockType::kDbt : BlockType::kPlain;
    st.repeat = named.get<std::size_t>("repeat");
    st.width = named.get<std::size_t>("width");
    st.out = named.get<std::size_t>("out");
    st.stride = named.get_or<std::size_t>("stride", 1);
    if (const json* jd = named.find("dbt")) st.dbt = dbt_from_json(*jd, st.width, "stage '" + st.name + "' dbt");
    named.finish();
    d.stages.push_back(std::move(st));
  }
  if (const json* jh = r.find("head")) {
    Reader h(*jh, "head");
    d.head.classes = h.get<std::size_t>("classes");
    d.head.use_last_dbt = h.get_or<bool>("use_last_dbt", false);
    if (const json* jl = h.find("last_dbt")) d.head.last_dbt = dbt_from_json(*jl, d.feature_channels(), "last_dbt");
    h.finish();
  }
  r.finish();
  d.validate();
  return d;
}

ArchDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open descriptor file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return descriptor_from_json(ss.str());
}

void save_descriptor(const ArchDescriptor& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write descriptor file '" + path + "'");
  out << descriptor_to_json(d);
  if (!out) fail(ErrorKind::kIo, "failed writing descriptor file '" + path + "'");
}

std::vector<std::string> preset_names() { return {"resnet-50", "dbtnet-50", "dbtnet-101", "dbtnet-tiny", "plain-tiny"}; }

ArchDescriptor preset(const std::string& name) {
  ArchDescriptor d;
  if (name == "resnet-50") {
    d = resnet_like(name, BlockType::kPlain, 6);
  } else if (name == "dbtnet-50") {
    d = resnet_like(name, BlockType::kDbt, 6);
  } else if (name == "dbtnet-101") {
    d = resnet_like(name, BlockType::kDbt, 23);
  } else if (name == "dbtnet-tiny") {
    d = tiny(name, BlockType::kDbt);
  } else if (name == "plain-tiny") {
    d = tiny(name, BlockType::kPlain);
  } else {
    fail(ErrorKind::kConfig, "unknown preset '" + name + "'");
  }
  d.validate();
  return d;
}

ArchDescriptor resolve_descriptor(const std::string& name_or_path) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return preset(name_or_path);
  return load_descriptor(name_or_path);
}

ArchDescriptor with_dbt_stages(ArchDescriptor d, const std::vector<std::string>& stages) {
  std::set<std::string> wanted(stages.begin(), stages.end());
  for (const auto& n : wanted) {
    if (n != "last") d.stage(n);  // throws for unknown names
  }
  for (auto& s : d.stages) {
    const bool on = wanted.count(s.name) > 0;
    if (on && !s.dbt) fail(ErrorKind::kConfig, "stage '" + s.name + "' has no DBT settings");
    s.block = on ? BlockType::kDbt : BlockType::kPlain;
  }
  d.head.use_last_dbt = wanted.count("last") > 0;
  if (d.head.use_last_dbt && !d.head.last_dbt) fail(ErrorKind::kConfig, "descriptor has no last-layer DBT settings");
  d.validate();
  return d;
}

}  // namespace dbt::model
