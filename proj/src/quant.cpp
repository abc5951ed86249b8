#include "wrpn/quant.hpp"

#include <algorithm>
#include <cmath>

namespace wrpn {

void QuantSpec::validate() const {
  require(bits >= 1 && bits <= kMaxQuantBits, ErrorCode::invalid_argument,
          "quantizer bit width must be in [1, " + std::to_string(kMaxQuantBits) + "], got " + std::to_string(bits));
  switch (family) {
    case QuantFamily::bwn_binary:
      require(kind == OperandKind::weight && bits == 1, ErrorCode::invalid_argument,
              "bwn-binary applies only to 1-bit weights");
      break;
    case QuantFamily::wrpn:
      require(!(kind == OperandKind::weight && bits == 1), ErrorCode::invalid_argument,
              "1-bit weights use the bwn-binary family");
      break;
    case QuantFamily::dorefa:
      require(kind == OperandKind::weight && bits >= 2, ErrorCode::invalid_argument,
              "dorefa quantizer is defined for weights with k > 1");
      break;
  }
}

std::string to_string(QuantFamily family) {
  switch (family) {
    case QuantFamily::wrpn: return "wrpn";
    case QuantFamily::dorefa: return "dorefa";
    case QuantFamily::bwn_binary: return "bwn-binary";
  }
  return "?";
}

std::string to_string(OperandKind kind) { return kind == OperandKind::weight ? "weight" : "activation"; }

QuantFamily parse_family(const std::string& name) {
  if (name == "wrpn") return QuantFamily::wrpn;
  if (name == "dorefa") return QuantFamily::dorefa;
  if (name == "bwn-binary" || name == "bwn") return QuantFamily::bwn_binary;
  fail(ErrorCode::invalid_argument, "unknown quantizer family '" + name + "'");
}

OperandKind parse_kind(const std::string& name) {
  if (name == "weight" || name == "weights") return OperandKind::weight;
  if (name == "activation" || name == "act" || name == "acts") return OperandKind::activation;
  fail(ErrorCode::invalid_argument, "unknown operand kind '" + name + "'");
}

float QuantizedTensor::scale_for(std::size_t index) const {
  if (channel_scales.empty()) return scale;
  const std::size_t per_channel = codes.size() / channel_scales.size();
  return channel_scales[index / per_channel];
}

Tensor QuantizedTensor::dequantize() const {
  Tensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = static_cast<float>(codes[i]) * scale_for(i);
  return out;
}

namespace {

void require_no_nan(const Tensor& x, const char* op) {
  for (float v : x.values())
    if (std::isnan(v)) fail(ErrorCode::numeric, std::string(op) + ": NaN input");
}

Tensor clamp(const Tensor& x, float lo, float hi, const char* op) {
  require_no_nan(x, op);
  Tensor out = x;
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

void require_range(const Tensor& x, float lo, float hi, const char* op) {
  for (float v : x.values())
    if (!(v >= lo && v <= hi))
      fail(ErrorCode::domain, std::string(op) + ": input " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                  ", " + std::to_string(hi) + "]; clip first");
}

}  // namespace

Tensor clip_weights(const Tensor& x) { return clamp(x, -1.0f, 1.0f, "clip_weights"); }

Tensor clip_acts(const Tensor& x) { return clamp(x, 0.0f, 1.0f, "clip_acts"); }

QuantizedTensor quantize_weights_wrpn(const Tensor& x, int bits) {
  require(bits >= 2, ErrorCode::invalid_argument, "wrpn weight quantizer needs k >= 2; use bwn-binary for k = 1");
  QuantSpec spec{bits, OperandKind::weight, QuantFamily::wrpn};
  spec.validate();
  require_range(x, -1.0f, 1.0f, "quantize_weights_wrpn");
  const std::int32_t levels = weight_levels(bits);
  QuantizedTensor q{x.shape(), std::vector<std::int32_t>(x.size()), code_step(levels), {}, spec};
  for (std::size_t i = 0; i < x.size(); ++i) q.codes[i] = round_to_code(x[i], levels);
  return q;
}

QuantizedTensor quantize_acts_wrpn(const Tensor& x, int bits) {
  QuantSpec spec{bits, OperandKind::activation, QuantFamily::wrpn};
  spec.validate();
  require_range(x, 0.0f, 1.0f, "quantize_acts_wrpn");
  const std::int32_t levels = activation_levels(bits);
  QuantizedTensor q{x.shape(), std::vector<std::int32_t>(x.size()), code_step(levels), {}, spec};
  for (std::size_t i = 0; i < x.size(); ++i) q.codes[i] = round_to_code(x[i], levels);
  return q;
}

Tensor quantize_weights_dorefa(const Tensor& x, int bits) {
  QuantSpec{bits, OperandKind::weight, QuantFamily::dorefa}.validate();
  require_finite(x, "quantize_weights_dorefa");
  double max_tanh = 0.0;
  for (float v : x.values()) max_tanh = std::max(max_tanh, std::abs(std::tanh(static_cast<double>(v))));
  require(max_tanh > 0.0, ErrorCode::domain, "quantize_weights_dorefa: all-zero tensor has no scale");
  const std::int32_t levels = activation_levels(bits);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double unit = std::tanh(static_cast<double>(x[i])) / (2.0 * max_tanh) + 0.5;
    const double q = static_cast<double>(round_to_code(unit, levels)) / static_cast<double>(levels);
    out[i] = static_cast<float>(2.0 * q - 1.0);
  }
  return out;
}

QuantizedTensor binarize_weights_bwn(const Tensor& x, BwnScaling scaling) {
  require(!x.empty(), ErrorCode::invalid_argument, "binarize_weights_bwn: empty tensor");
  require_finite(x, "binarize_weights_bwn");
  QuantizedTensor q{x.shape(), std::vector<std::int32_t>(x.size()), 0.0f, {},
                    QuantSpec{1, OperandKind::weight, QuantFamily::bwn_binary}};
  for (std::size_t i = 0; i < x.size(); ++i) q.codes[i] = x[i] >= 0.0f ? 1 : -1;

  auto mean_abs = [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += std::abs(static_cast<double>(x[i]));
    return static_cast<float>(s / static_cast<double>(end - begin));
  };
  if (scaling == BwnScaling::per_layer) {
    q.scale = mean_abs(0, x.size());
  } else {
    const std::size_t channels = x.extent(0);
    const std::size_t per = x.size() / channels;
    q.channel_scales.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) q.channel_scales[c] = mean_abs(c * per, (c + 1) * per);
    q.scale = mean_abs(0, x.size());
  }
  return q;
}

Tensor fake_quantize(const Tensor& x, const QuantSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case QuantFamily::dorefa:
      return quantize_weights_dorefa(x, spec.bits);
    case QuantFamily::bwn_binary:
      return binarize_weights_bwn(x).dequantize();
    case QuantFamily::wrpn:
      break;
  }
  if (spec.kind == OperandKind::weight) return quantize_weights_wrpn(clip_weights(x), spec.bits).dequantize();
  return quantize_acts_wrpn(clip_acts(x), spec.bits).dequantize();
}

Tensor ste_backward(const Tensor& upstream_grad, const Tensor& pre_clip_input, const QuantSpec& spec) {
  require(upstream_grad.shape() == pre_clip_input.shape(), ErrorCode::shape_mismatch,
          "ste_backward: gradient " + shape_str(upstream_grad.shape()) + " vs input " +
              shape_str(pre_clip_input.shape()));
  Tensor grad(upstream_grad.shape());
  if (spec.family == QuantFamily::dorefa) {
    double max_tanh = 0.0;
    for (float v : pre_clip_input.values()) max_tanh = std::max(max_tanh, std::abs(std::tanh(static_cast<double>(v))));
    require(max_tanh > 0.0, ErrorCode::domain, "ste_backward: dorefa input is all zero");
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double t = std::tanh(static_cast<double>(pre_clip_input[i]));
      grad[i] = static_cast<float>(upstream_grad[i] * (1.0 - t * t) / max_tanh);
    }
    return grad;
  }
  const float lo = spec.kind == OperandKind::weight ? -1.0f : 0.0f;
  const float hi = 1.0f;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const float v = pre_clip_input[i];
    grad[i] = (v < lo || v > hi) ? 0.0f : upstream_grad[i];
  }
  return grad;
}

}  // namespace wrpn
