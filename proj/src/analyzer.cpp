#include "wrpn/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace wrpn {

namespace {

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string model_name(CostModel m) { return m == CostModel::uniform ? "uniform" : "exempt-first-last"; }

}  // namespace

bool is_supported_bits(int bits) {
  return bits == 1 || bits == 2 || bits == 4 || bits == 8 || bits == 16 || bits == 32;
}

std::string precision_label(const Precision& p) {
  return std::to_string(p.bits_a) + "b A, " + std::to_string(p.bits_w) + "b W";
}

PrecisionPolicy PrecisionPolicy::uniform(Precision p) {
  PrecisionPolicy policy;
  policy.default_precision = p;
  return policy;
}

PrecisionPolicy PrecisionPolicy::standard(const NetworkDescriptor& desc, Precision p) {
  PrecisionPolicy policy = uniform(p);
  const auto t = trainable_layers(desc);
  if (!t.empty()) {
    policy.exempt.insert(desc.layers[t.front()].id);
    policy.exempt.insert(desc.layers[t.back()].id);
  }
  for (const auto& l : desc.layers)
    if (l.exempt) policy.exempt.insert(l.id);
  return policy;
}

Precision PrecisionPolicy::for_layer(const std::string& id) const {
  if (exempt.count(id)) return Precision{32, 32};
  if (auto it = overrides.find(id); it != overrides.end()) return it->second;
  return default_precision;
}

void PrecisionPolicy::validate(const NetworkDescriptor& desc) const {
  auto check = [](const Precision& p) {
    require(is_supported_bits(p.bits_a) && is_supported_bits(p.bits_w), ErrorCode::invalid_argument,
            "unsupported precision " + precision_label(p) + "; widths must be one of 1,2,4,8,16,32");
  };
  check(default_precision);
  for (const auto& [id, p] : overrides) {
    check(p);
    require(desc.has_layer(id), ErrorCode::invalid_argument, "precision policy names unknown layer '" + id + "'");
  }
  for (const auto& id : exempt)
    require(desc.has_layer(id), ErrorCode::invalid_argument, "precision policy exempts unknown layer '" + id + "'");
}

PrecisionPolicy policy_for(CostModel model, const NetworkDescriptor& desc, Precision p) {
  return model == CostModel::uniform ? PrecisionPolicy::uniform(p) : PrecisionPolicy::standard(desc, p);
}

NetworkDescriptor widen_descriptor(const NetworkDescriptor& desc, double factor) {
  require(std::isfinite(factor) && factor >= 1.0, ErrorCode::invalid_argument,
          "widening factor must be >= 1, got " + std::to_string(factor));
  const auto trainable = trainable_layers(desc);
  require(!trainable.empty(), ErrorCode::invalid_argument, "descriptor '" + desc.name + "' has no conv/fc layer");
  NetworkDescriptor out = desc;
  for (std::size_t i : trainable) {
    if (i == trainable.back()) continue;  // logits stay fixed
    auto& l = out.layers[i];
    l.out_channels = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(l.out_channels * factor)));
  }
  if (factor != 1.0) out.name = desc.name + "-x" + fmt(factor, factor == std::floor(factor) ? 0 : 2);
  resolve(out);
  return out;
}

std::uint64_t fma_count(const ResolvedLayer& layer) { return layer.fma; }

std::uint64_t total_fma(const NetworkDescriptor& desc) {
  std::uint64_t total = 0;
  for (const auto& r : resolve(desc)) total += fma_count(r);
  return total;
}

double CostReport::ratio_to(const CostReport& baseline) const {
  require(baseline.total_bit_cost > 0, ErrorCode::domain, "baseline cost is zero");
  return static_cast<double>(total_bit_cost) / static_cast<double>(baseline.total_bit_cost);
}

CostReport compute_cost(const NetworkDescriptor& desc, const PrecisionPolicy& policy) {
  policy.validate(desc);
  CostReport report;
  report.network = desc.name;
  for (const auto& r : resolve(desc)) {
    if (!is_trainable(r.desc->kind)) continue;
    LayerCost c;
    c.id = r.desc->id;
    c.fma = fma_count(r);
    c.precision = policy.for_layer(c.id);
    c.bit_cost = c.fma * static_cast<std::uint64_t>(c.precision.bits_a + c.precision.bits_w);
    report.total_fma += c.fma;
    report.total_bit_cost += c.bit_cost;
    report.layers.push_back(std::move(c));
  }
  return report;
}

double cost_ratio(const NetworkDescriptor& desc, double widen, Precision p, CostModel model) {
  const CostReport baseline = compute_cost(desc, PrecisionPolicy::uniform({32, 32}));
  const NetworkDescriptor wide = widen_descriptor(desc, widen);
  return compute_cost(wide, policy_for(model, wide, p)).ratio_to(baseline);
}

std::vector<Precision> standard_precision_grid() {
  std::vector<Precision> grid;
  for (int w : {32, 8, 4, 2, 1})
    for (int a : {32, 8, 4, 2, 1}) grid.push_back({a, w});
  return grid;
}

std::vector<Precision> parse_precision_grid(const std::string& spec) {
  if (spec == "standard") return standard_precision_grid();
  std::vector<Precision> grid;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, ErrorCode::invalid_argument, "grid entries look like A:W, got '" + item + "'");
    Precision p;
    try {
      p.bits_a = std::stoi(item.substr(0, colon));
      p.bits_w = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "grid entry '" + item + "' is not A:W");
    }
    require(is_supported_bits(p.bits_a) && is_supported_bits(p.bits_w), ErrorCode::invalid_argument,
            "unsupported widths in grid entry '" + item + "'");
    grid.push_back(p);
  }
  require(!grid.empty(), ErrorCode::invalid_argument, "empty precision grid");
  return grid;
}

CostTable cost_table(const NetworkDescriptor& desc, const std::vector<double>& widen_factors,
                     const std::vector<Precision>& grid, CostModel model) {
  require(!widen_factors.empty() && !grid.empty(), ErrorCode::invalid_argument, "cost_table needs widths and precisions");
  CostTable table{desc.name, model, widen_factors, grid, {}};
  const CostReport baseline = compute_cost(desc, PrecisionPolicy::uniform({32, 32}));
  for (double f : widen_factors) {
    const NetworkDescriptor wide = widen_descriptor(desc, f);
    std::vector<double> row;
    for (const auto& p : grid) row.push_back(compute_cost(wide, policy_for(model, wide, p)).ratio_to(baseline));
    table.ratios.push_back(std::move(row));
  }
  return table;
}

std::string cost_table_csv(const CostTable& table) {
  std::ostringstream os;
  os << "network,model,widen,bits_a,bits_w,cost_ratio\n";
  for (std::size_t i = 0; i < table.widen_factors.size(); ++i)
    for (std::size_t j = 0; j < table.precisions.size(); ++j)
      os << table.network << ',' << model_name(table.model) << ',' << fmt(table.widen_factors[i], 2) << ','
         << table.precisions[j].bits_a << ',' << table.precisions[j].bits_w << ',' << fmt(table.ratios[i][j], 4)
         << '\n';
  return os.str();
}

std::string cost_grid_csv(const CostTable& table, std::size_t widen_index) {
  require(widen_index < table.widen_factors.size(), ErrorCode::invalid_argument, "widen index out of range");
  std::vector<int> acts, weights;
  for (const auto& p : table.precisions) {
    if (std::find(acts.begin(), acts.end(), p.bits_a) == acts.end()) acts.push_back(p.bits_a);
    if (std::find(weights.begin(), weights.end(), p.bits_w) == weights.end()) weights.push_back(p.bits_w);
  }
  std::ostringstream os;
  os << "weights\\acts";
  for (int a : acts) os << ',' << a << "b A";
  os << '\n';
  for (int w : weights) {
    os << w << "b W";
    for (int a : acts) {
      os << ',';
      for (std::size_t j = 0; j < table.precisions.size(); ++j)
        if (table.precisions[j] == Precision{a, w}) os << fmt(table.ratios[widen_index][j], 2) << 'x';
    }
    os << '\n';
  }
  return os.str();
}

std::string cost_report_csv(const CostReport& report, const CostReport& baseline) {
  std::ostringstream os;
  os << "layer,fma,bits_a,bits_w,bit_cost\n";
  for (const auto& l : report.layers)
    os << l.id << ',' << l.fma << ',' << l.precision.bits_a << ',' << l.precision.bits_w << ',' << l.bit_cost << '\n';
  os << "total," << report.total_fma << ",,," << report.total_bit_cost << '\n';
  os << "ratio_vs_baseline,,,," << fmt(report.ratio_to(baseline), 4) << '\n';
  return os.str();
}

FootprintReport memory_footprint(const NetworkDescriptor& desc, std::size_t batch, Phase phase,
                                 const FootprintOptions& o) {
  require(batch >= 1, ErrorCode::invalid_argument, "batch size must be >= 1");
  require(o.bytes_per_act > 0 && o.bytes_per_weight > 0 && o.bytes_per_grad > 0, ErrorCode::invalid_argument,
          "byte widths must be positive");
  const double b = static_cast<double>(batch);
  FootprintReport rep;
  rep.network = desc.name;
  rep.batch = batch;
  rep.phase = phase;
  // A tensor of sub-byte elements occupies whole bytes.
  auto bytes = [b](double elems, double width) { return std::ceil(elems * b * width); };
  rep.act_bytes = bytes(static_cast<double>(desc.input.elements()), o.bytes_per_act);
  for (const auto& r : resolve(desc)) {
    double in_elems = 0;
    for (const auto& s : r.inputs) in_elems += static_cast<double>(s.elements());
    const double out_elems = static_cast<double>(r.output.elements());
    LayerFootprint lf{r.desc->id, bytes(in_elems, o.bytes_per_act), bytes(out_elems, o.bytes_per_act),
                      std::ceil(static_cast<double>(r.weights) * o.bytes_per_weight)};
    rep.act_bytes += lf.ofm_bytes;
    rep.weight_bytes += lf.weight_bytes;
    rep.max_ifm_bytes = std::max(rep.max_ifm_bytes, lf.ifm_bytes);
    rep.max_ofm_bytes = std::max(rep.max_ofm_bytes, lf.ofm_bytes);
    rep.max_dz_bytes = std::max(rep.max_dz_bytes, bytes(out_elems, o.bytes_per_grad));
    rep.max_dx_bytes = std::max(rep.max_dx_bytes, bytes(in_elems, o.bytes_per_grad));
    rep.layers.push_back(std::move(lf));
  }
  if (phase == Phase::training)
    rep.total_bytes = rep.act_bytes + rep.weight_bytes + rep.max_dz_bytes + rep.max_dx_bytes;
  else
    rep.total_bytes = rep.max_ifm_bytes + rep.max_ofm_bytes + rep.weight_bytes;
  rep.activation_fraction = 1.0 - rep.weight_bytes / rep.total_bytes;
  return rep;
}

std::string footprint_csv(const std::vector<FootprintReport>& reports) {
  std::ostringstream os;
  os << "network,phase,batch,act_bytes,weight_bytes,max_dz_bytes,max_dx_bytes,max_ifm_bytes,max_ofm_bytes,"
        "total_bytes,activation_fraction\n";
  for (const auto& r : reports)
    os << r.network << ',' << (r.phase == Phase::training ? "training" : "inference") << ',' << r.batch << ','
       << fmt(r.act_bytes, 0) << ',' << fmt(r.weight_bytes, 0) << ',' << fmt(r.max_dz_bytes, 0) << ','
       << fmt(r.max_dx_bytes, 0) << ',' << fmt(r.max_ifm_bytes, 0) << ',' << fmt(r.max_ofm_bytes, 0) << ','
       << fmt(r.total_bytes, 0) << ',' << fmt(r.activation_fraction, 6) << '\n';
  return os.str();
}

double first_order_efficiency(int bits_a, int bits_w) {
  require(is_supported_bits(bits_a) && is_supported_bits(bits_w), ErrorCode::invalid_argument,
          "first_order_efficiency: widths must be one of 1,2,4,8,16,32");
  return 64.0 / static_cast<double>(bits_a + bits_w);
}

}  // namespace wrpn
