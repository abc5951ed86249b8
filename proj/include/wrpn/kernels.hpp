#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wrpn/tensor.hpp"

namespace wrpn {

// Dense integer matrix, row-major. Used for code matrices going into the
// packers and for the 32-bit accumulators coming out of the GEMMs.
struct IntMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> values;

  IntMatrix() = default;
  IntMatrix(std::size_t r, std::size_t c, std::int32_t fill = 0) : rows(r), cols(c), values(r * c, fill) {}
  std::int32_t& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const IntMatrix&) const = default;
};

// Which GEMM operand a packed matrix feeds. Left operands (M×K activations)
// are stored one row per lane; right operands (K×N weights) one column per
// lane, so every dot product walks two contiguous lanes.
enum class PackRole { lhs, rhs };

struct PackedInt4Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_signed = false;
  PackRole role = PackRole::lhs;
  std::size_t lane_bytes = 0;          // ceil(depth / 2)
  std::vector<std::uint8_t> payload;   // low nibble holds the even index

  std::size_t lanes() const { return role == PackRole::lhs ? rows : cols; }
  std::size_t depth() const { return role == PackRole::lhs ? cols : rows; }
  std::size_t payload_bytes() const { return payload.size(); }
};

struct PackedTernaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  PackRole role = PackRole::rhs;
  std::size_t lane_words = 0;
  std::vector<std::uint64_t> nonzero;
  std::vector<std::uint64_t> sign;     // 1 = negative; only where nonzero is set
  float scale = 1.0f;

  std::size_t lanes() const { return role == PackRole::lhs ? rows : cols; }
  std::size_t depth() const { return role == PackRole::lhs ? cols : rows; }
  std::size_t payload_bytes() const { return (nonzero.size() + sign.size()) * sizeof(std::uint64_t); }
};

enum class BinaryDomain { zero_one, plus_minus_one };

struct PackedBinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  PackRole role = PackRole::lhs;
  BinaryDomain domain = BinaryDomain::zero_one;
  std::size_t lane_words = 0;
  std::vector<std::uint64_t> bits;     // zero_one: 1 = one; plus_minus_one: 1 = +1
  float scale = 1.0f;

  std::size_t lanes() const { return role == PackRole::lhs ? rows : cols; }
  std::size_t depth() const { return role == PackRole::lhs ? cols : rows; }
  std::size_t payload_bytes() const { return bits.size() * sizeof(std::uint64_t); }
};

// Packers reject codes outside the target domain: [0,15] unsigned or [-8,7]
// signed for INT4, {-1,0,1} for ternary, {0,1} or {-1,1} for binary.
PackedInt4Matrix pack_int4(const IntMatrix& codes, bool is_signed, PackRole role);
PackedTernaryMatrix pack_ternary(const IntMatrix& codes, PackRole role, float scale = 1.0f);
PackedBinaryMatrix pack_binary(const IntMatrix& codes, BinaryDomain domain, PackRole role, float scale = 1.0f);

// Builds a ternary matrix from raw bitplanes, enforcing that no sign bit is
// set where the nonzero bit is clear and that padding bits are clear.
PackedTernaryMatrix ternary_from_bitplanes(std::size_t rows, std::size_t cols, PackRole role,
                                           std::vector<std::uint64_t> nonzero, std::vector<std::uint64_t> sign,
                                           float scale = 1.0f);

IntMatrix unpack(const PackedInt4Matrix& m);
IntMatrix unpack(const PackedTernaryMatrix& m);
IntMatrix unpack(const PackedBinaryMatrix& m);

// Depth limit for INT4 GEMMs: |15 * -8| * 2^20 stays below 2^31.
inline constexpr std::size_t kMaxInt4Depth = std::size_t{1} << 20;
// Binary and ternary accumulators grow by at most 15 per step.
inline constexpr std::size_t kMaxBitDepth = std::size_t{1} << 26;

// acts M×K (usually unsigned), weights K×N (usually signed) -> M×N.
IntMatrix gemm_i4i4(const PackedInt4Matrix& acts, const PackedInt4Matrix& weights);

// acts M×K INT4, weights K×N ternary. The inner loop selects, negates and
// adds activation codes under the two weight bitplanes; it never multiplies.
IntMatrix gemm_i4ter(const PackedInt4Matrix& acts, const PackedTernaryMatrix& weights);

// acts in {0,1}, weights in {-1,+1}:
//   out = popcount(a & w+) - popcount(a & ~w+)
IntMatrix gemm_binary(const PackedBinaryMatrix& acts, const PackedBinaryMatrix& weights);

// Both operands in {-1,+1}: out = K - 2 * popcount(a xor w).
IntMatrix gemm_xnor(const PackedBinaryMatrix& acts, const PackedBinaryMatrix& weights);

// Dense integer reference used by tests and as a fallback for precision
// pairs without a packed kernel.
IntMatrix gemm_int_ref(const IntMatrix& a, const IntMatrix& b);

// acc * scale_w * scale_a, evaluated in double and rounded once to FP32.
Tensor dequantize_accumulators(const IntMatrix& acc, float scale_w, float scale_a);

// Worker threads used for output-row partitioning. Defaults to the
// WRPN_NUM_THREADS environment variable (1 when unset). Results do not
// depend on the thread count.
int kernel_threads();
void set_kernel_threads(int n);

}  // namespace wrpn
