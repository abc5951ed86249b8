#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wrpn/descriptor.hpp"

namespace wrpn {

struct Precision {
  int bits_a = 32;
  int bits_w = 32;
  bool operator==(const Precision&) const = default;
  bool full() const { return bits_a == 32 && bits_w == 32; }
};

bool is_supported_bits(int bits);  // {1,2,4,8,16,32}
std::string precision_label(const Precision& p);  // "4b A, 2b W"

// Per-layer operand widths. Layers listed in `exempt` stay at 32/32;
// `overrides` win over the default.
struct PrecisionPolicy {
  Precision default_precision;
  std::set<std::string> exempt;
  std::map<std::string, Precision> overrides;

  // Same widths on every layer, nothing exempt.
  static PrecisionPolicy uniform(Precision p);
  // First and last conv/fc layers (plus any layer flagged "exempt" in the
  // descriptor) pinned to 32/32, everything else at `p`.
  static PrecisionPolicy standard(const NetworkDescriptor& desc, Precision p);

  Precision for_layer(const std::string& id) const;
  // Rejects unsupported widths and ids the descriptor does not define.
  void validate(const NetworkDescriptor& desc) const;
};

enum class CostModel { uniform, exempt_first_last };
PrecisionPolicy policy_for(CostModel model, const NetworkDescriptor& desc, Precision p);

// Hidden conv/fc channel counts times `factor`, rounded to nearest (>= 1).
// The image channels and the classifier's output count are unchanged.
NetworkDescriptor widen_descriptor(const NetworkDescriptor& desc, double factor);

std::uint64_t fma_count(const ResolvedLayer& layer);
std::uint64_t total_fma(const NetworkDescriptor& desc);

struct LayerCost {
  std::string id;
  std::uint64_t fma = 0;
  Precision precision;
  std::uint64_t bit_cost = 0;  // fma * (bits_a + bits_w)
};

struct CostReport {
  std::string network;
  std::vector<LayerCost> layers;
  std::uint64_t total_fma = 0;
  std::uint64_t total_bit_cost = 0;

  double ratio_to(const CostReport& baseline) const;
};

CostReport compute_cost(const NetworkDescriptor& desc, const PrecisionPolicy& policy);

// Cost of `desc` widened by `widen` at `p` relative to the unwidened FP32 network.
double cost_ratio(const NetworkDescriptor& desc, double widen, Precision p, CostModel model);

struct CostTable {
  std::string network;
  CostModel model = CostModel::uniform;
  std::vector<double> widen_factors;
  std::vector<Precision> precisions;
  std::vector<std::vector<double>> ratios;  // [widen][precision]
};

// Rows of Table-3 style grids: weights {32,8,4,2,1} × activations {32,8,4,2,1}.
std::vector<Precision> standard_precision_grid();
// Parses "standard" or a comma list of A:W pairs, e.g. "4:2,2:2,1:1".
std::vector<Precision> parse_precision_grid(const std::string& spec);

CostTable cost_table(const NetworkDescriptor& desc, const std::vector<double>& widen_factors,
                     const std::vector<Precision>& grid, CostModel model);

// Long format: network,model,widen,bits_a,bits_w,fma_ratio,cost_ratio
std::string cost_table_csv(const CostTable& table);
// Square weights×activations layout for one widen factor (Table-3 shape).
std::string cost_grid_csv(const CostTable& table, std::size_t widen_index);
std::string cost_report_csv(const CostReport& report, const CostReport& baseline);

enum class Phase { training, inference };

struct FootprintOptions {
  double bytes_per_act = 4.0;
  double bytes_per_weight = 4.0;
  double bytes_per_grad = 4.0;  // gradients stay in FP32
};

struct LayerFootprint {
  std::string id;
  double ifm_bytes = 0;
  double ofm_bytes = 0;
  double weight_bytes = 0;
};

// Training:  total = sum(ACT) + sum(W) + max(dZ) + max(dX)
// Inference: total = max(IFM) + max(OFM) + sum(W)
// ACT covers the input image and every layer output. dZ of a layer is the
// gradient of its output, dX the gradient of its input(s). The activation
// fraction is the batch-dependent share of the total, 1 - sum(W)/total.
struct FootprintReport {
  std::string network;
  std::size_t batch = 1;
  Phase phase = Phase::training;
  std::vector<LayerFootprint> layers;
  double act_bytes = 0;
  double weight_bytes = 0;
  double max_dz_bytes = 0;
  double max_dx_bytes = 0;
  double max_ifm_bytes = 0;
  double max_ofm_bytes = 0;
  double total_bytes = 0;
  double activation_fraction = 0;
};

FootprintReport memory_footprint(const NetworkDescriptor& desc, std::size_t batch, Phase phase,
                                 const FootprintOptions& options = {});
std::string footprint_csv(const std::vector<FootprintReport>& reports);

// Idealised speed-up over FP32×FP32 from operand bits alone: 64 / (a + w).
double first_order_efficiency(int bits_a, int bits_w);

}  // namespace wrpn
