#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wrpn/tensor.hpp"

namespace wrpn {

enum class OperandKind : std::uint8_t { weight = 0, activation = 1 };
enum class QuantFamily : std::uint8_t { wrpn = 0, dorefa = 1, bwn_binary = 2 };

// Highest bit width the quantizers accept; 32 means "leave in FP32" and is
// handled by callers (PrecisionPolicy), never by a quantizer.
inline constexpr int kMaxQuantBits = 16;

struct QuantSpec {
  int bits = 32;
  OperandKind kind = OperandKind::weight;
  QuantFamily family = QuantFamily::wrpn;

  // Throws ErrorCode::invalid_argument for combinations no quantizer serves,
  // e.g. one-bit wrpn weights (those go through BWN).
  void validate() const;
  bool operator==(const QuantSpec&) const = default;
};

std::string to_string(QuantFamily family);
std::string to_string(OperandKind kind);
QuantFamily parse_family(const std::string& name);
OperandKind parse_kind(const std::string& name);

// Integer codes with a positive step. Value of element i is codes[i] * scale
// evaluated as one FP32 multiply. `channel_scales` is only populated for
// per-output-channel BWN and then overrides `scale` along axis 0.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int32_t> codes;
  float scale = 1.0f;
  std::vector<float> channel_scales;
  QuantSpec spec;

  float scale_for(std::size_t index) const;
  Tensor dequantize() const;
  bool is_signed() const { return spec.kind == OperandKind::weight; }
};

// Largest positive code of the symmetric weight grid, 2^(k-1) - 1.
inline std::int32_t weight_levels(int bits) { return (std::int32_t{1} << (bits - 1)) - 1; }
// Largest activation code, 2^k - 1.
inline std::int32_t activation_levels(int bits) { return (std::int32_t{1} << bits) - 1; }

// round(levels * x), ties away from zero. Evaluated in double so the product
// of a float and a small integer is exact and the tie rule is the only rounding.
inline std::int32_t round_to_code(double x, std::int32_t levels) {
  return static_cast<std::int32_t>(std::round(x * static_cast<double>(levels)));
}

inline float code_step(std::int32_t levels) { return static_cast<float>(1.0 / static_cast<double>(levels)); }

Tensor clip_weights(const Tensor& x);
Tensor clip_acts(const Tensor& x);

QuantizedTensor quantize_weights_wrpn(const Tensor& x, int bits);
QuantizedTensor quantize_acts_wrpn(const Tensor& x, int bits);
Tensor quantize_weights_dorefa(const Tensor& x, int bits);

enum class BwnScaling { per_layer, per_output_channel };
QuantizedTensor binarize_weights_bwn(const Tensor& x, BwnScaling scaling = BwnScaling::per_layer);

// Dispatches to the quantizer selected by `spec`. Weight inputs for wrpn are
// clipped first; activation inputs are clipped to [0, 1]. DoReFa output is
// returned as a tensor of real values because its grid is affine, not
// code*scale.
Tensor fake_quantize(const Tensor& x, const QuantSpec& spec);

// Straight-through gradient of clip-then-quantize. The rounding step passes
// the gradient unchanged; the clip step zeroes it where `pre_clip_input` is
// strictly outside the clip range. DoReFa weights instead get the derivative
// of their tanh normalisation with the layer maximum held constant.
Tensor ste_backward(const Tensor& upstream_grad, const Tensor& pre_clip_input, const QuantSpec& spec);

}  // namespace wrpn
