#include "wrpn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>

#include "wrpn/kernels.hpp"

namespace wrpn {

std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::qconv: return "qconv";
    case NodeKind::qfc: return "qfc";
    case NodeKind::conv_fp32: return "conv_fp32";
    case NodeKind::fc_fp32: return "fc_fp32";
    case NodeKind::relu: return "relu";
    case NodeKind::maxpool: return "maxpool";
    case NodeKind::avgpool_global: return "avgpool_global";
    case NodeKind::batchnorm: return "batchnorm";
  }
  return "?";
}

double init_bound(bool quantized_weights, std::size_t fan_in) {
  if (quantized_weights) return 1.0;
  return std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
}

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

// ---- dense helpers -------------------------------------------------------

// C[M×N] += A[M×K] · B[K×N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M×N] += A[K×M]^T · B[K×N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// col[K×P], K = (c, ki, kj), P = (oh, ow); padded taps are zero.
template <typename T, typename U>
void im2col(const ConvGeometry& g, const T* x, U* col) {
  const std::size_t oh = g.output_h(), ow = g.output_w(), p = oh * ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        U* out = col + row * p;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
            const bool inside = iy >= 0 && iy < static_cast<long>(g.input_h) && ix >= 0 && ix < static_cast<long>(g.input_w);
            out[y * ow + xo] = inside ? static_cast<U>(x[(c * g.input_h + iy) * g.input_w + ix]) : U(0);
          }
        }
      }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t oh = g.output_h(), ow = g.output_w(), p = oh * ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        const T* in = col + row * p;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.input_h)) continue;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.input_w)) continue;
            dx[(c * g.input_h + iy) * g.input_w + ix] += in[y * ow + xo];
          }
        }
      }
}

// ---- quantizer plumbing --------------------------------------------------

template <typename T>
Tensor as_float(const BasicTensor<T>& x) {
  if constexpr (std::is_same_v<T, float>)
    return x;
  else
    return x.template cast<float>();
}

template <typename T>
BasicTensor<T> from_float(const Tensor& x) {
  if constexpr (std::is_same_v<T, float>)
    return x;
  else
    return x.template cast<T>();
}

template <typename T>
BasicTensor<T> clip(const BasicTensor<T>& x, T lo, T hi) {
  BasicTensor<T> out = x;
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

template <typename T>
BasicTensor<T> dorefa_normalised(const BasicTensor<T>& w) {
  double m = 0;
  for (T v : w.values()) m = std::max(m, std::abs(std::tanh(static_cast<double>(v))));
  require(m > 0, ErrorCode::domain, "dorefa weights are all zero");
  BasicTensor<T> out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<T>(std::tanh(static_cast<double>(w[i])) / m);
  return out;
}

template <typename T>
BasicTensor<T> quant_weights(const BasicTensor<T>& w, const QuantSpec& spec, const BuildOptions& o) {
  if (spec.bits >= 32) return w;
  if (o.round_identity) return spec.family == QuantFamily::dorefa ? dorefa_normalised(w) : clip(w, T(-1), T(1));
  const Tensor wf = as_float(w);
  switch (spec.family) {
    case QuantFamily::bwn_binary: return from_float<T>(binarize_weights_bwn(wf, o.bwn_scaling).dequantize());
    case QuantFamily::dorefa: return from_float<T>(quantize_weights_dorefa(wf, spec.bits));
    case QuantFamily::wrpn: break;
  }
  return from_float<T>(quantize_weights_wrpn(clip_weights(wf), spec.bits).dequantize());
}

template <typename T>
BasicTensor<T> quant_acts(const BasicTensor<T>& x, const QuantSpec& spec, const BuildOptions& o) {
  if (spec.bits >= 32) return x;
  if (o.round_identity) return clip(x, T(0), T(1));
  return from_float<T>(quantize_acts_wrpn(clip_acts(as_float(x)), spec.bits).dequantize());
}

template <typename T>
BasicTensor<T> ste(const BasicTensor<T>& grad, const BasicTensor<T>& pre, const QuantSpec& spec) {
  if (spec.bits >= 32) return grad;
  if constexpr (std::is_same_v<T, float>) {
    return ste_backward(grad, pre, spec);
  } else {
    // Same contract as ste_backward, kept in double for gradient checks.
    BasicTensor<T> out(grad.shape());
    if (spec.family == QuantFamily::dorefa) {
      double m = 0;
      for (T v : pre.values()) m = std::max(m, std::abs(std::tanh(static_cast<double>(v))));
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = std::tanh(static_cast<double>(pre[i]));
        out[i] = static_cast<T>(grad[i] * (1.0 - t * t) / m);
      }
      return out;
    }
    const T lo = spec.kind == OperandKind::weight ? T(-1) : T(0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (pre[i] < lo || pre[i] > T(1)) ? T(0) : grad[i];
    return out;
  }
}

bool is_sequential(const NetworkDescriptor& desc) {
  for (std::size_t i = 0; i < desc.layers.size(); ++i) {
    const auto& l = desc.layers[i];
    if (l.inputs.empty()) continue;
    const std::string prev = i == 0 ? "input" : desc.layers[i - 1].id;
    if (l.inputs.size() != 1 || l.inputs[0] != prev) return false;
  }
  return true;
}

std::size_t per_sample(const Shape& s) { return shape_size(s); }

}  // namespace

// ---- construction ----------------------------------------------------------

template <typename T>
Network<T> Network<T>::build(const NetworkDescriptor& desc, const BuildOptions& options) {
  require(options.widen >= 1.0, ErrorCode::invalid_argument, "widen factor must be >= 1");
  require(is_sequential(desc), ErrorCode::invalid_argument,
          "descriptor '" + desc.name + "' is not a plain layer sequence; the training engine takes sequential nets only");
  options.policy.validate(desc);

  Network net;
  net.options_ = options;
  net.desc_ = widen_descriptor(desc, options.widen);
  const auto resolved = resolve(net.desc_);
  net.classes_ = classifier_outputs(net.desc_);

  std::mt19937_64 rng(options.seed);
  auto add_param = [&net](std::string name, BasicTensor<T> value) {
    Parameter<T> p;
    p.name = std::move(name);
    p.velocity = BasicTensor<T>(value.shape());
    p.value = std::move(value);
    net.params_.push_back(std::move(p));
    return net.params_.size() - 1;
  };

  for (std::size_t i = 0; i < net.desc_.layers.size(); ++i) {
    const auto& l = net.desc_.layers[i];
    const auto& r = resolved[i];
    const FeatureShape in = r.inputs.front();
    Node n;
    n.id = l.id;
    n.in_shape = {in.channels, in.height, in.width};
    n.out_shape = {r.output.channels, r.output.height, r.output.width};
    switch (l.kind) {
      case LayerKind::softmax:
        require(i + 1 == net.desc_.layers.size(), ErrorCode::invalid_argument,
                "softmax '" + l.id + "' must be the last layer; it is folded into the loss");
        continue;
      case LayerKind::add:
      case LayerKind::concat:
        fail(ErrorCode::invalid_argument, "layer '" + l.id + "': the training engine has no " + to_string(l.kind));
      case LayerKind::relu: n.kind = NodeKind::relu; break;
      case LayerKind::maxpool:
        require(!l.global && l.kernel_h == l.kernel_w, ErrorCode::invalid_argument,
                "maxpool '" + l.id + "' must use a square window");
        n.kind = NodeKind::maxpool;
        n.pool = {l.kernel_h, l.stride, l.padding};
        break;
      case LayerKind::avgpool:
        require(l.global, ErrorCode::invalid_argument, "avgpool '" + l.id + "': only global average pooling is trainable");
        n.kind = NodeKind::avgpool_global;
        break;
      case LayerKind::batchnorm:
        n.kind = NodeKind::batchnorm;
        n.gamma = add_param(l.id + ".gamma", BasicTensor<T>({in.channels}, T(1)));
        n.beta = add_param(l.id + ".beta", BasicTensor<T>({in.channels}, T(0)));
        n.running_mean = BasicTensor<T>({in.channels}, T(0));
        n.running_var = BasicTensor<T>({in.channels}, T(1));
        break;
      case LayerKind::conv:
      case LayerKind::fc: {
        const bool conv = l.kind == LayerKind::conv;
        n.precision = options.policy.for_layer(l.id);
        if (n.precision.bits_w < 32) {
          n.wspec = {n.precision.bits_w, OperandKind::weight,
                     n.precision.bits_w == 1 ? QuantFamily::bwn_binary : options.weight_family};
          n.wspec.validate();
        }
        if (n.precision.bits_a < 32) {
          n.aspec = {n.precision.bits_a, OperandKind::activation, QuantFamily::wrpn};
          n.aspec.validate();
        }
        const bool q = n.quantized();
        n.kind = conv ? (q ? NodeKind::qconv : NodeKind::conv_fp32) : (q ? NodeKind::qfc : NodeKind::fc_fp32);
        n.geom.in_channels = conv ? in.channels : in.elements();
        n.geom.out_channels = l.out_channels;
        if (conv) {
          n.geom.kernel_h = l.kernel_h;
          n.geom.kernel_w = l.kernel_w;
          n.geom.stride = l.stride;
          n.geom.padding = l.padding;
          n.geom.input_h = in.height;
          n.geom.input_w = in.width;
        }
        const std::size_t fan_in = n.geom.in_channels * n.geom.kernel_h * n.geom.kernel_w;
        const Shape wshape = conv ? n.geom.weight_shape() : Shape{n.geom.out_channels, n.geom.in_channels};
        BasicTensor<T> w(wshape);
        const double b = init_bound(n.wspec.bits < 32, fan_in);
        std::uniform_real_distribution<double> dist(-b, b);
        for (auto& v : w.values()) v = static_cast<T>(dist(rng));
        n.weight = add_param(l.id + ".weight", std::move(w));
        net.params_[n.weight].quantized = n.wspec.bits < 32;
        n.bias = add_param(l.id + ".bias", BasicTensor<T>({l.out_channels}, T(0)));
        break;
      }
    }
    net.nodes_.push_back(std::move(n));
  }
  require(!net.nodes_.empty(), ErrorCode::invalid_argument, "descriptor has no trainable layers");
  require(per_sample(net.nodes_.back().out_shape) == net.classes_, ErrorCode::invalid_argument,
          "the last layer must produce one value per class");
  net.caches_.resize(net.nodes_.size());
  return net;
}

template <typename T>
std::size_t Network<T>::scalar_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
BasicTensor<T> Network<T>::effective_weights(std::size_t index) const {
  const Node& n = nodes_.at(index);
  require(n.trainable(), ErrorCode::invalid_argument, "node '" + n.id + "' has no weights");
  return quant_weights(params_[n.weight].value, n.wspec, options_);
}

template <typename T>
bool Network<T>::has_packed_path(std::size_t index) const {
  if constexpr (!std::is_same_v<T, float>) {
    return false;
  } else {
    const Node& n = nodes_.at(index);
    return n.trainable() && n.wspec.bits < 32 && n.aspec.bits < 32 && n.wspec.family != QuantFamily::dorefa &&
           !options_.round_identity;
  }
}

// ---- forward -------------------------------------------------------------

template <typename T>
BasicTensor<T> Network<T>::node_forward(std::size_t index, const BasicTensor<T>& x, Mode mode, Cache* cache) const {
  const Node& n = nodes_[index];
  require(x.rank() == 4 && Shape(x.shape().begin() + 1, x.shape().end()) == n.in_shape, ErrorCode::shape_mismatch,
          "node '" + n.id + "' expects N×" + shape_str(n.in_shape) + ", got " + shape_str(x.shape()));
  const std::size_t batch = x.extent(0);
  Shape oshape{batch};
  oshape.insert(oshape.end(), n.out_shape.begin(), n.out_shape.end());
  BasicTensor<T> out(oshape);

  switch (n.kind) {
    case NodeKind::qconv:
    case NodeKind::conv_fp32:
    case NodeKind::qfc:
    case NodeKind::fc_fp32: {
      BasicTensor<T> xq = quant_acts(x, n.aspec, options_);
      BasicTensor<T> wq = quant_weights(params_[n.weight].value, n.wspec, options_);
      const auto& bias = params_[n.bias].value;
      const std::size_t cout = n.geom.out_channels;
      if (n.kind == NodeKind::qconv || n.kind == NodeKind::conv_fp32) {
        const std::size_t k = n.geom.in_channels * n.geom.kernel_h * n.geom.kernel_w;
        const std::size_t p = n.geom.output_h() * n.geom.output_w();
        const std::size_t in_sz = per_sample(n.in_shape);
        std::vector<T> col(k * p);
        for (std::size_t s = 0; s < batch; ++s) {
          im2col(n.geom, xq.data() + s * in_sz, col.data());
          T* o = out.data() + s * cout * p;
          gemm_nn(cout, p, k, wq.data(), col.data(), o);
          for (std::size_t c = 0; c < cout; ++c)
            for (std::size_t j = 0; j < p; ++j) o[c * p + j] += bias[c];
        }
      } else {
        const std::size_t in = n.geom.in_channels;
        std::vector<T> wt(in * cout);
        transpose(cout, in, wq.data(), wt.data());
        gemm_nn(batch, cout, in, xq.data(), wt.data(), out.data());
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t c = 0; c < cout; ++c) out[s * cout + c] += bias[c];
      }
      if (cache) {
        cache->input = x;
        cache->qinput = std::move(xq);
        cache->qweight = std::move(wq);
      }
      break;
    }
    case NodeKind::relu: {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
      if (cache) cache->output = out;
      break;
    }
    case NodeKind::maxpool: {
      const std::size_t c = n.in_shape[0], h = n.in_shape[1], w = n.in_shape[2];
      const std::size_t oh = n.out_shape[1], ow = n.out_shape[2];
      if (cache) cache->argmax.assign(out.size(), 0);
      for (std::size_t s = 0; s < batch * c; ++s) {
        const T* plane = x.data() + s * h * w;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xo = 0; xo < ow; ++xo) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t arg = 0;
            for (std::size_t i = 0; i < n.pool.window; ++i) {
              const long iy = static_cast<long>(y * n.pool.stride + i) - static_cast<long>(n.pool.padding);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t j = 0; j < n.pool.window; ++j) {
                const long ix = static_cast<long>(xo * n.pool.stride + j) - static_cast<long>(n.pool.padding);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                const std::size_t at = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
                if (plane[at] > best) {
                  best = plane[at];
                  arg = at;
                }
              }
            }
            const std::size_t o = (s * oh + y) * ow + xo;
            out[o] = best;
            if (cache) cache->argmax[o] = s * h * w + arg;
          }
      }
      break;
    }
    case NodeKind::avgpool_global: {
      const std::size_t c = n.in_shape[0], hw = n.in_shape[1] * n.in_shape[2];
      for (std::size_t s = 0; s < batch * c; ++s) {
        T acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += x[s * hw + i];
        out[s] = acc / static_cast<T>(hw);
      }
      break;
    }
    case NodeKind::batchnorm: {
      const auto& gamma = params_[n.gamma].value;
      const auto& beta = params_[n.beta].value;
      const std::size_t c = n.in_shape[0], hw = n.in_shape[1] * n.in_shape[2];
      if (mode == Mode::eval) {
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T inv = T(1) / std::sqrt(n.running_var[ch] + T(kBnEps));
            const T* xi = x.data() + (s * c + ch) * hw;
            T* yo = out.data() + (s * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) yo[i] = gamma[ch] * (xi[i] - n.running_mean[ch]) * inv + beta[ch];
          }
        break;
      }
      // Training statistics are handled by node_forward_train.
      fail(ErrorCode::state, "batch norm in training mode needs a cache");
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> Network<T>::node_forward_train(std::size_t index, const BasicTensor<T>& x, Cache& cache) {
  Node& n = nodes_[index];
  if (n.kind != NodeKind::batchnorm) return node_forward(index, x, Mode::train, &cache);

  require(x.rank() == 4 && Shape(x.shape().begin() + 1, x.shape().end()) == n.in_shape, ErrorCode::shape_mismatch,
          "node '" + n.id + "' expects N×" + shape_str(n.in_shape) + ", got " + shape_str(x.shape()));
  const auto& gamma = params_[n.gamma].value;
  const auto& beta = params_[n.beta].value;
  const std::size_t batch = x.extent(0), c = n.in_shape[0], hw = n.in_shape[1] * n.in_shape[2];
  const double m = static_cast<double>(batch * hw);
  BasicTensor<T> out(x.shape());
  cache.xhat = BasicTensor<T>(x.shape());
  cache.inv_std.assign(c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0, sq = 0;
    for (std::size_t s = 0; s < batch; ++s) {
      const T* xi = x.data() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += static_cast<double>(xi[i]);
    }
    const double mean = sum / m;
    for (std::size_t s = 0; s < batch; ++s) {
      const T* xi = x.data() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = static_cast<double>(xi[i]) - mean;
        sq += d * d;
      }
    }
    const double var = sq / m;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kBnEps));
    cache.inv_std[ch] = inv;
    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>(static_cast<double>(x[base + i]) - mean) * inv;
        cache.xhat[base + i] = xh;
        out[base + i] = gamma[ch] * xh + beta[ch];
      }
    }
    n.running_mean[ch] = static_cast<T>(kBnMomentum * n.running_mean[ch] + (1 - kBnMomentum) * mean);
    n.running_var[ch] = static_cast<T>(kBnMomentum * n.running_var[ch] + (1 - kBnMomentum) * var);
  }
  return out;
}

template <typename T>
ForwardResult<T> Network<T>::forward(const BasicTensor<T>& batch, std::span<const int> labels, Mode mode) {
  require(batch.rank() == 4 && batch.extent(0) > 0, ErrorCode::shape_mismatch,
          "forward: batch must be N×C×H×W, got " + shape_str(batch.shape()));
  require(labels.size() == batch.extent(0), ErrorCode::shape_mismatch, "forward: one label per sample required");
  require_finite(batch, "forward");
  ++generation_;
  cache_valid_ = false;

  BasicTensor<T> x = batch;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    x = mode == Mode::train ? node_forward_train(i, x, caches_[i]) : node_forward(i, x, Mode::eval, nullptr);

  ForwardResult<T> r;
  r.logits = x.reshaped({batch.extent(0), classes_});
  auto xent = softmax_xent(r.logits, labels);
  r.loss = xent.loss;
  r.probs = std::move(xent.probs);
  r.generation = generation_;
  labels_.assign(labels.begin(), labels.end());
  cache_valid_ = mode == Mode::train;
  return r;
}

// ---- backward ------------------------------------------------------------

template <typename T>
Gradients<T> Network<T>::backward(const ForwardResult<T>& result) {
  require(cache_valid_ && result.generation == generation_, ErrorCode::state,
          "backward: cache is stale; run a training-mode forward first");
  Gradients<T> g;
  g.generation = generation_;
  for (const auto& p : params_) g.values.emplace_back(p.value.shape());

  // d(mean xent)/d logits = (p - onehot) / N
  const std::size_t batch = result.probs.extent(0);
  BasicTensor<T> dy = result.probs;
  for (std::size_t s = 0; s < batch; ++s) dy[s * classes_ + static_cast<std::size_t>(labels_[s])] -= T(1);
  for (auto& v : dy.values()) v /= static_cast<T>(batch);
  {
    Shape s{batch};
    s.insert(s.end(), nodes_.back().out_shape.begin(), nodes_.back().out_shape.end());
    dy = dy.reshaped(s);
  }

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& n = nodes_[idx];
    Cache& c = caches_[idx];
    Shape ishape{batch};
    ishape.insert(ishape.end(), n.in_shape.begin(), n.in_shape.end());
    BasicTensor<T> dx(ishape);

    switch (n.kind) {
      case NodeKind::qconv:
      case NodeKind::conv_fp32: {
        const auto& geom = n.geom;
        const std::size_t cout = geom.out_channels;
        const std::size_t k = geom.in_channels * geom.kernel_h * geom.kernel_w;
        const std::size_t p = geom.output_h() * geom.output_w();
        const std::size_t in_sz = per_sample(n.in_shape);
        BasicTensor<T> dwq(c.qweight.shape());
        BasicTensor<T> dxq(ishape);
        auto& db = g.values[n.bias];
        std::vector<T> col(k * p), colt(p * k), dcol(k * p);
        for (std::size_t s = 0; s < batch; ++s) {
          const T* d = dy.data() + s * cout * p;
          im2col(geom, c.qinput.data() + s * in_sz, col.data());
          transpose(k, p, col.data(), colt.data());
          gemm_nn(cout, k, p, d, colt.data(), dwq.data());
          for (std::size_t ch = 0; ch < cout; ++ch)
            for (std::size_t j = 0; j < p; ++j) db[ch] += d[ch * p + j];
          std::fill(dcol.begin(), dcol.end(), T(0));
          gemm_tn(k, p, cout, c.qweight.data(), d, dcol.data());
          col2im(geom, dcol.data(), dxq.data() + s * in_sz);
        }
        g.values[n.weight] = ste(dwq, params_[n.weight].value, n.wspec);
        dx = ste(dxq, c.input, n.aspec);
        break;
      }
      case NodeKind::qfc:
      case NodeKind::fc_fp32: {
        const std::size_t in = n.geom.in_channels, cout = n.geom.out_channels;
        BasicTensor<T> dwq(c.qweight.shape());
        gemm_tn(cout, in, batch, dy.data(), c.qinput.data(), dwq.data());
        auto& db = g.values[n.bias];
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t ch = 0; ch < cout; ++ch) db[ch] += dy[s * cout + ch];
        BasicTensor<T> dxq(ishape);
        gemm_nn(batch, in, cout, dy.data(), c.qweight.data(), dxq.data());
        g.values[n.weight] = ste(dwq, params_[n.weight].value, n.wspec);
        dx = ste(dxq, c.input, n.aspec);
        break;
      }
      case NodeKind::relu:
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = c.output[i] > T(0) ? dy[i] : T(0);
        break;
      case NodeKind::maxpool:
        for (std::size_t o = 0; o < dy.size(); ++o) dx[c.argmax[o]] += dy[o];
        break;
      case NodeKind::avgpool_global: {
        const std::size_t hw = n.in_shape[1] * n.in_shape[2];
        for (std::size_t s = 0; s < dy.size(); ++s)
          for (std::size_t i = 0; i < hw; ++i) dx[s * hw + i] = dy[s] / static_cast<T>(hw);
        break;
      }
      case NodeKind::batchnorm: {
        const auto& gamma = params_[n.gamma].value;
        auto& dgamma = g.values[n.gamma];
        auto& dbeta = g.values[n.beta];
        const std::size_t ch_n = n.in_shape[0], hw = n.in_shape[1] * n.in_shape[2];
        const T m = static_cast<T>(batch * hw);
        for (std::size_t ch = 0; ch < ch_n; ++ch) {
          T sg = 0, sgx = 0;
          for (std::size_t s = 0; s < batch; ++s) {
            const std::size_t base = (s * ch_n + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sg += dy[base + i];
              sgx += dy[base + i] * c.xhat[base + i];
            }
          }
          dgamma[ch] = sgx;
          dbeta[ch] = sg;
          const T f = gamma[ch] * c.inv_std[ch] / m;
          for (std::size_t s = 0; s < batch; ++s) {
            const std::size_t base = (s * ch_n + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) dx[base + i] = f * (m * dy[base + i] - sg - c.xhat[base + i] * sgx);
          }
        }
        break;
      }
    }
    dy = std::move(dx);
  }
  return g;
}

template <typename T>
void Network<T>::sgd_step(const Gradients<T>& grads, const SgdConfig& config) {
  require(grads.values.size() == params_.size(), ErrorCode::shape_mismatch, "sgd_step: gradient count mismatch");
  require(config.momentum >= 0 && config.momentum < 1, ErrorCode::invalid_argument, "sgd_step: momentum must be in [0,1)");
  require(config.lr >= 0 && std::isfinite(config.lr), ErrorCode::invalid_argument, "sgd_step: bad learning rate");
  require(config.quantized_lr_scale >= 0 && std::isfinite(config.quantized_lr_scale), ErrorCode::invalid_argument,
          "sgd_step: bad quantized_lr_scale");
  const T lr0 = static_cast<T>(config.lr), lrq = static_cast<T>(config.lr * config.quantized_lr_scale);
  const T mu = static_cast<T>(config.momentum), wd = static_cast<T>(config.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& g = grads.values[i];
    require(g.shape() == p.value.shape(), ErrorCode::shape_mismatch, "sgd_step: gradient shape for " + p.name);
    require_finite(g, "sgd_step");
    const T lr = p.quantized ? lrq : lr0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      p.velocity[j] = mu * p.velocity[j] + g[j] + wd * p.value[j];
      p.value[j] -= lr * p.velocity[j];
    }
  }
}

// ---- inference -------------------------------------------------------------

template <typename T>
BasicTensor<T> Network<T>::run_node(std::size_t index, const BasicTensor<T>& input, Exec exec) const {
  require(index < nodes_.size(), ErrorCode::invalid_argument, "run_node: index out of range");
  if (exec == Exec::reference || !has_packed_path(index)) return node_forward(index, input, Mode::eval, nullptr);

  if constexpr (std::is_same_v<T, float>) {
    const Node& n = nodes_[index];
    require(input.rank() == 4 && Shape(input.shape().begin() + 1, input.shape().end()) == n.in_shape,
            ErrorCode::shape_mismatch, "node '" + n.id + "' expects N×" + shape_str(n.in_shape));
    const std::size_t batch = input.extent(0);
    const bool conv = n.kind == NodeKind::qconv;
    const std::size_t cout = n.geom.out_channels;
    const std::size_t k = n.geom.in_channels * n.geom.kernel_h * n.geom.kernel_w;
    const std::size_t p = conv ? n.geom.output_h() * n.geom.output_w() : 1;

    const QuantizedTensor qa = quantize_acts_wrpn(clip_acts(input), n.aspec.bits);
    const Tensor& w = params_[n.weight].value;
    const QuantizedTensor qw = n.wspec.family == QuantFamily::bwn_binary
                                   ? binarize_weights_bwn(w, options_.bwn_scaling)
                                   : quantize_weights_wrpn(clip_weights(w), n.wspec.bits);

    IntMatrix lhs(batch * p, k);
    if (conv) {
      const std::size_t in_sz = per_sample(n.in_shape);
      std::vector<std::int32_t> col(k * p);
      for (std::size_t s = 0; s < batch; ++s) {
        im2col(n.geom, qa.codes.data() + s * in_sz, col.data());
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t j = 0; j < p; ++j) lhs.at(s * p + j, r) = col[r * p + j];
      }
    } else {
      std::copy(qa.codes.begin(), qa.codes.end(), lhs.values.begin());
    }
    IntMatrix rhs(k, cout);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t r = 0; r < k; ++r) rhs.at(r, co) = qw.codes[co * k + r];

    const int ka = n.aspec.bits, kw = n.wspec.bits;
    IntMatrix acc;
    if (ka <= 4 && kw == 1 && ka == 1)
      acc = gemm_binary(pack_binary(lhs, BinaryDomain::zero_one, PackRole::lhs),
                        pack_binary(rhs, BinaryDomain::plus_minus_one, PackRole::rhs));
    else if (ka <= 4 && kw <= 2)
      acc = gemm_i4ter(pack_int4(lhs, false, PackRole::lhs), pack_ternary(rhs, PackRole::rhs));
    else if (ka <= 4 && kw <= 4)
      acc = gemm_i4i4(pack_int4(lhs, false, PackRole::lhs), pack_int4(rhs, true, PackRole::rhs));
    else
      acc = gemm_int_ref(lhs, rhs);

    Tensor out({batch, cout, conv ? n.geom.output_h() : 1, conv ? n.geom.output_w() : 1});
    const auto& bias = params_[n.bias].value;
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t co = 0; co < cout; ++co) {
          const double sw = qw.channel_scales.empty() ? qw.scale : qw.channel_scales[co];
          const float v = static_cast<float>(static_cast<double>(acc.at(s * p + j, co)) * sw * qa.scale);
          out[(s * cout + co) * p + j] = v + bias[co];
        }
    return out;
  } else {
    fail(ErrorCode::invalid_argument, "packed execution needs a float network");
  }
}

template <typename T>
BasicTensor<T> Network<T>::predict(const BasicTensor<T>& batch, Exec exec) const {
  require(batch.rank() == 4 && batch.extent(0) > 0, ErrorCode::shape_mismatch,
          "predict: batch must be N×C×H×W, got " + shape_str(batch.shape()));
  BasicTensor<T> x = batch;
  for (std::size_t i = 0; i < nodes_.size(); ++i) x = run_node(i, x, exec);
  return x.reshaped({batch.extent(0), classes_});
}

template class Network<float>;
template class Network<double>;

}  // namespace wrpn
