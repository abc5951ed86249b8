#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wrpn/analyzer.hpp"
#include "wrpn/descriptor.hpp"
#include "wrpn/quant.hpp"
#include "wrpn/tensor.hpp"

namespace wrpn {

enum class NodeKind { qconv, qfc, conv_fp32, fc_fp32, relu, maxpool, avgpool_global, batchnorm };
std::string to_string(NodeKind kind);

struct BuildOptions {
  double widen = 1.0;
  PrecisionPolicy policy;                          // default: everything FP32
  std::uint64_t seed = 1;
  QuantFamily weight_family = QuantFamily::wrpn;   // for k >= 2; one-bit weights always use BWN
  BwnScaling bwn_scaling = BwnScaling::per_layer;
  // Quantizers reduce to their clip step (round replaced by identity).
  bool round_identity = false;
};

enum class Mode { train, eval };
// Exec::packed sends quantized conv/fc layers through the bit-packed GEMMs.
enum class Exec { reference, packed };

template <typename T>
struct Parameter {
  std::string name;   // "<layer>.weight", ".bias", ".gamma", ".beta"
  BasicTensor<T> value;
  BasicTensor<T> velocity;
  bool quantized = false;   // weight of a layer whose weights are quantized
};

template <typename T>
struct Gradients {
  std::uint64_t generation = 0;
  std::vector<BasicTensor<T>> values;  // same order as Network::parameters()
};

template <typename T>
struct ForwardResult {
  T loss = 0;
  BasicTensor<T> logits;      // N × classes
  BasicTensor<T> probs;
  std::uint64_t generation = 0;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  // Multiplies lr for quantized weights. Those start on U(-1,1) and sit in
  // front of batch norm, so their gradients are small relative to their size.
  double quantized_lr_scale = 1.0;
};

inline constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

template <typename T>
class Network {
 public:
  struct Node {
    NodeKind kind = NodeKind::relu;
    std::string id;
    Precision precision;        // conv/fc only
    QuantSpec wspec;            // bits 32 = weights stay FP32
    QuantSpec aspec;            // bits 32 = input activations stay FP32
    ConvGeometry geom;          // conv: full geometry; fc: in/out channels only
    PoolGeometry pool;
    std::size_t weight = kNoParam, bias = kNoParam, gamma = kNoParam, beta = kNoParam;
    BasicTensor<T> running_mean, running_var;
    Shape in_shape, out_shape;  // per sample, C×H×W

    bool trainable() const { return kind == NodeKind::qconv || kind == NodeKind::qfc || kind == NodeKind::conv_fp32 || kind == NodeKind::fc_fp32; }
    bool quantized() const { return wspec.bits < 32 || aspec.bits < 32; }
  };

  // Sequential descriptors only: every layer reads its predecessor.
  // Hidden channel counts are widened, per-layer precisions come from the
  // policy (ids of the unwidened descriptor), weights are drawn from `seed`.
  static Network build(const NetworkDescriptor& desc, const BuildOptions& options);

  const NetworkDescriptor& descriptor() const { return desc_; }
  const BuildOptions& options() const { return options_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::size_t scalar_parameter_count() const;
  std::size_t classes() const { return classes_; }

  // Mode::train uses batch statistics in batch norm and updates the running
  // ones. The cached activations belong to the returned generation.
  ForwardResult<T> forward(const BasicTensor<T>& batch, std::span<const int> labels, Mode mode);
  // Full-precision gradients of the mean loss. Throws ErrorCode::state when
  // `result` is not the latest training-mode forward.
  Gradients<T> backward(const ForwardResult<T>& result);
  // v = momentum * v + g + weight_decay * w;  w -= lr * v
  // (lr * quantized_lr_scale for quantized weights)
  void sgd_step(const Gradients<T>& grads, const SgdConfig& config);

  // Eval-mode logits (N × classes).
  BasicTensor<T> predict(const BasicTensor<T>& batch, Exec exec = Exec::reference) const;
  // Eval-mode output of node `index` for an input of its expected shape.
  BasicTensor<T> run_node(std::size_t index, const BasicTensor<T>& input, Exec exec) const;

  // Weights as used by the forward pass (quantized where the policy says so).
  BasicTensor<T> effective_weights(std::size_t node_index) const;
  // True when run_node(index, ., Exec::packed) uses a packed kernel.
  bool has_packed_path(std::size_t node_index) const;

 private:
  struct Cache;
  BasicTensor<T> node_forward(std::size_t index, const BasicTensor<T>& x, Mode mode, Cache* cache) const;
  BasicTensor<T> node_forward_train(std::size_t index, const BasicTensor<T>& x, Cache& cache);

  NetworkDescriptor desc_;
  BuildOptions options_;
  std::vector<Node> nodes_;
  std::vector<Parameter<T>> params_;
  std::size_t classes_ = 0;

  struct Cache {
    BasicTensor<T> input;       // node input as received (pre-quantization)
    BasicTensor<T> qinput;      // input after activation quantization
    BasicTensor<T> qweight;
    BasicTensor<T> output;
    BasicTensor<T> xhat;        // batch norm
    std::vector<T> inv_std;
    std::vector<std::size_t> argmax;
  };
  std::vector<Cache> caches_;
  std::vector<int> labels_;
  std::uint64_t generation_ = 0;
  bool cache_valid_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

// Draws the weights a quantized layer starts from: U(-1, 1) for quantized
// weights, U(-b, b) with b = sqrt(6 / fan_in) for FP32 weights.
double init_bound(bool quantized_weights, std::size_t fan_in);

}  // namespace wrpn
