#include "dbt/model/cost.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "dbt/nn/layers.hpp"

namespace dbt::model {

namespace {

using u64 = std::uint64_t;

u64 conv_params(u64 in, u64 out, u64 k) { return in * out * k * k; }
u64 bn_params(u64 c) { return 2 * c; }

struct Walker {
  const ArchDescriptor& d;
  std::size_t h, w;
  CostReport r;

  void conv(BlockCost& b, u64 in, u64 out, u64 k, std::size_t stride, std::size_t pad) {
    h = nn::conv_output_size(h, k, stride, pad);
    w = nn::conv_output_size(w, k, stride, pad);
    b.params += conv_params(in, out, k) + bn_params(out);
    b.flops += static_cast<u64>(h) * w * out * in * k * k;
  }

  void dbt(BlockCost& b, const bilinear::DbtConfig& c) {
    b.params += bn_params(c.channels);
    const u64 o = dbt_overhead_flops(c, static_cast<u64>(h) * w);
    b.flops += o;
    b.dbt_overhead += o;
  }

  void bottleneck(BlockCost& b, const StageSpec& s, std::size_t in, std::size_t stride) {
    const std::size_t h0 = h, w0 = w;
    conv(b, in, s.width, 1, stride, 0);
    if (s.block == BlockType::kDbt) dbt(b, *s.dbt);
    conv(b, s.width, s.width, 3, 1, 1);
    conv(b, s.width, s.out, 1, 1, 0);
    if (stride != 1 || in != s.out) {
      const std::size_t h1 = h, w1 = w;
      h = h0;
      w = w0;
      conv(b, in, s.out, 1, stride, 0);
      h = h1;
      w = w1;
    }
  }

  void add(BlockCost b, const std::string& stage) {
    r.params += b.params;
    r.flops += b.flops;
    r.total_dbt_overhead += b.dbt_overhead;
    r.max_block_dbt_overhead = std::max(r.max_block_dbt_overhead, b.dbt_overhead);
    if (r.stages.empty() || r.stages.back().name != stage) r.stages.push_back({stage});
    auto& st = r.stages.back();
    st.params += b.params;
    st.flops += b.flops;
    st.dbt_overhead += b.dbt_overhead;
    r.blocks.push_back(std::move(b));
  }

  void run(std::vector<FeatureShape>* shapes) {
    BlockCost stem{"stem"};
    conv(stem, d.input_channels, d.stem.channels, d.stem.kernel, d.stem.stride, d.stem.padding);
    if (shapes) shapes->push_back({"stem", d.stem.channels, h, w});
    if (d.stem.max_pool) {
      h = nn::conv_output_size(h, 3, 2, 1);
      w = nn::conv_output_size(w, 3, 2, 1);
      if (shapes) shapes->push_back({"pool", d.stem.channels, h, w});
    }
    add(std::move(stem), "stem");
    std::size_t in = d.stem.channels;
    for (const auto& s : d.stages) {
      for (std::size_t i = 0; i < s.repeat; ++i) {
        BlockCost b{s.name + "." + std::to_string(i)};
        bottleneck(b, s, in, i == 0 ? s.stride : 1);
        in = s.out;
        add(std::move(b), s.name);
      }
      if (shapes) shapes->push_back({s.name, s.out, h, w});
    }
    if (d.head.use_last_dbt) {
      BlockCost b{"last"};
      conv(b, in, in, 1, 1, 0);
      dbt(b, *d.head.last_dbt);
      add(std::move(b), "last");
      if (shapes) shapes->push_back({"last", in, h, w});
    }
    BlockCost fc{"fc"};
    fc.params = static_cast<u64>(in) * d.head.classes + d.head.classes;
    fc.flops = static_cast<u64>(in) * d.head.classes;
    add(std::move(fc), "head");
  }
};

std::string human(u64 v) {
  char buf[32];
  if (v >= 1000000000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f G", static_cast<double>(v) / 1e9);
  } else if (v >= 1000000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f M", static_cast<double>(v) / 1e6);
  } else if (v >= 1000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f K", static_cast<double>(v) / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
  }
  return buf;
}

}  // namespace

u64 group_bilinear_flops_per_position(const bilinear::DbtConfig& c) {
  const u64 n = c.group_size();
  return static_cast<u64>(c.groups) * n * n;
}

u64 dbt_overhead_flops(const bilinear::DbtConfig& c, u64 hw) {
  u64 f = group_bilinear_flops_per_position(c) * hw;
  if (c.use_encoding) f += static_cast<u64>(c.channels) * hw;
  if (c.needs_interpolation()) f += static_cast<u64>(c.channels) * hw;
  return f;
}

u64 count_params(const ArchDescriptor& d) {
  d.validate();
  // parameter counts do not depend on the spatial size
  Walker w{d, 224, 224, {}};
  w.run(nullptr);
  return w.r.params;
}

CostReport count_flops(const ArchDescriptor& d, std::size_t input_size) {
  d.validate();
  Walker w{d, input_size, input_size, {}};
  w.run(nullptr);
  return w.r;
}

std::vector<FeatureShape> trace_shapes(const ArchDescriptor& d, std::size_t input_size) {
  d.validate();
  Walker w{d, input_size, input_size, {}};
  std::vector<FeatureShape> shapes;
  w.run(&shapes);
  return shapes;
}

std::string cost_report_json(const ArchDescriptor& d, std::size_t input_size, const CostReport& r) {
  nlohmann::ordered_json j;
  j["descriptor"] = d.name;
  j["input_size"] = input_size;
  j["params"] = r.params;
  j["flops"] = r.flops;
  j["max_block_dbt_overhead"] = r.max_block_dbt_overhead;
  j["total_dbt_overhead"] = r.total_dbt_overhead;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : r.stages) {
    j["stages"].push_back({{"name", s.name}, {"params", s.params}, {"flops", s.flops}, {"dbt_overhead", s.dbt_overhead}});
  }
  j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : r.blocks) {
    j["blocks"].push_back({{"name", b.name}, {"params", b.params}, {"flops", b.flops}, {"dbt_overhead", b.dbt_overhead}});
  }
  return j.dump(2) + "\n";
}

std::string cost_report_text(const ArchDescriptor& d, std::size_t input_size, const CostReport& r) {
  std::ostringstream os;
  os << d.name << " @ " << input_size << "x" << input_size << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %14s %16s %14s\n", "stage", "params", "flops", "dbt overhead");
  os << line;
  for (const auto& s : r.stages) {
    std::snprintf(line, sizeof line, "%-8s %14llu %16llu %14llu\n", s.name.c_str(),
                  static_cast<unsigned long long>(s.params), static_cast<unsigned long long>(s.flops),
                  static_cast<unsigned long long>(s.dbt_overhead));
    os << line;
  }
  os << "total params " << r.params << " (" << human(r.params) << "), flops " << r.flops << " (" << human(r.flops)
     << "), max per-block DBT overhead " << r.max_block_dbt_overhead << " (" << human(r.max_block_dbt_overhead)
     << ")\n";
  return os.str();
}

}  // namespace dbt::model
