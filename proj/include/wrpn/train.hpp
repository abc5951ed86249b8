#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wrpn/dataset.hpp"
#include "wrpn/network.hpp"

namespace wrpn {

struct LrStep {
  std::size_t epoch = 0;  // first epoch (0-based) the rate applies to
  double lr = 0.1;
};

struct TrainConfig {
  std::uint64_t seed = 1;            // data order
  std::vector<LrStep> lr_schedule{{0, 0.1}};
  double momentum = 0.9;
  double weight_decay = 0.0;
  double quantized_lr_scale = 1.0;   // see SgdConfig
  std::size_t batch_size = 64;
  std::size_t epochs = 10;

  double lr_at(std::size_t epoch) const;
  void validate() const;
};

// {"seed":1,"epochs":10,"batch_size":64,"momentum":0.9,"weight_decay":0,
//  "quantized_lr_scale":1,"lr":[[0,0.1],[6,0.01]]}  -- "lr" may also be a single number.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochRecord {
  std::size_t epoch = 0;   // 1-based
  double lr = 0;
  double loss = 0;         // mean training loss over the epoch's batches
  double train_top1 = 0;   // percent, from the training-mode forward passes
  double eval_top1 = 0;    // percent, eval mode; 0 without an eval set
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double final_eval_top1() const { return epochs.empty() ? 0.0 : epochs.back().eval_top1; }
};

// Minibatch momentum SGD. Sample order per epoch is a Fisher-Yates shuffle
// seeded from (config.seed, epoch), so a run is bit-reproducible.
TrainLog train(Network<float>& net, const Dataset& train_set, const Dataset* eval_set, const TrainConfig& config);

// Top-1 accuracy in percent.
double evaluate(const Network<float>& net, const Dataset& data, Exec exec = Exec::reference, std::size_t batch = 256);

// epoch,lr,loss,train_top1,top1
std::string train_log_csv(const TrainLog& log);

}  // namespace wrpn
