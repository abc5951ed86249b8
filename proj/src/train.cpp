#include "wrpn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace wrpn {

using nlohmann::json;

double TrainConfig::lr_at(std::size_t epoch) const {
  double lr = lr_schedule.front().lr;
  for (const auto& s : lr_schedule)
    if (epoch >= s.epoch) lr = s.lr;
  return lr;
}

void TrainConfig::validate() const {
  require(batch_size > 0, ErrorCode::invalid_argument, "train: batch_size must be positive");
  require(epochs > 0, ErrorCode::invalid_argument, "train: epochs must be positive");
  require(momentum >= 0 && momentum < 1, ErrorCode::invalid_argument, "train: momentum must be in [0,1)");
  require(weight_decay >= 0, ErrorCode::invalid_argument, "train: weight_decay must be >= 0");
  require(quantized_lr_scale >= 0 && std::isfinite(quantized_lr_scale), ErrorCode::invalid_argument,
          "train: quantized_lr_scale must be finite and >= 0");
  require(!lr_schedule.empty() && lr_schedule.front().epoch == 0, ErrorCode::invalid_argument,
          "train: lr schedule must start at epoch 0");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    require(lr_schedule[i].lr >= 0 && std::isfinite(lr_schedule[i].lr), ErrorCode::invalid_argument,
            "train: learning rates must be finite and >= 0");
    if (i) require(lr_schedule[i].epoch > lr_schedule[i - 1].epoch, ErrorCode::invalid_argument,
                   "train: lr schedule epochs must increase");
  }
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  try {
    json j = json::parse(text);
    // experiment files nest the training settings
    if (j.contains("train_config")) j = j.at("train_config");
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.quantized_lr_scale = j.value("quantized_lr_scale", c.quantized_lr_scale);
    if (j.contains("lr")) {
      const auto& lr = j.at("lr");
      c.lr_schedule.clear();
      if (lr.is_number()) {
        c.lr_schedule.push_back({0, lr.get<double>()});
      } else {
        for (const auto& step : lr) c.lr_schedule.push_back({step.at(0).get<std::size_t>(), step.at(1).get<double>()});
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open train config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.extent(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (logits[row * c + j] > logits[row * c + best]) best = j;
  return best;
}

void check_compatible(const Network<float>& net, const Dataset& d) {
  d.validate();
  const auto& in = net.nodes().front().in_shape;
  require(in == Shape{d.channels, d.height, d.width}, ErrorCode::shape_mismatch,
          "dataset samples are " + shape_str({d.channels, d.height, d.width}) + " but the network takes " +
              shape_str(in));
  require(d.classes <= net.classes(), ErrorCode::shape_mismatch, "dataset has more classes than the network outputs");
}

}  // namespace

double evaluate(const Network<float>& net, const Dataset& data, Exec exec, std::size_t batch) {
  check_compatible(net, data);
  require(batch > 0, ErrorCode::invalid_argument, "evaluate: batch must be positive");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = net.predict(data.batch(idx), exec);
    for (std::size_t i = 0; i < idx.size(); ++i)
      correct += argmax_row(logits, i) == static_cast<std::size_t>(data.labels[idx[i]]) ? 1 : 0;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainLog train(Network<float>& net, const Dataset& train_set, const Dataset* eval_set, const TrainConfig& config) {
  config.validate();
  check_compatible(net, train_set);
  if (eval_set) check_compatible(net, *eval_set);

  TrainLog log;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with an explicit modulus draw keeps the order independent
    // of the standard library's distribution implementations.
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    SgdConfig sgd{config.lr_at(epoch), config.momentum, config.weight_decay, config.quantized_lr_scale};
    double loss_sum = 0;
    std::size_t batches = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto labels = train_set.batch_labels(idx);
      const auto fwd = net.forward(train_set.batch(idx), labels, Mode::train);
      require(std::isfinite(fwd.loss), ErrorCode::numeric, "train: loss diverged");
      for (std::size_t i = 0; i < idx.size(); ++i)
        correct += argmax_row(fwd.logits, i) == static_cast<std::size_t>(labels[i]) ? 1 : 0;
      loss_sum += fwd.loss;
      ++batches;
      net.sgd_step(net.backward(fwd), sgd);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = sgd.lr;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.train_top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (eval_set) rec.eval_top1 = evaluate(net, *eval_set);
    log.epochs.push_back(rec);
  }
  return log;
}

std::string train_log_csv(const TrainLog& log) {
  std::string out = "epoch,lr,loss,train_top1,top1\n";
  char buf[160];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%g,%.6f,%.2f,%.2f\n", e.epoch, e.lr, e.loss, e.train_top1, e.eval_top1);
    out += buf;
  }
  return out;
}

}  // namespace wrpn
