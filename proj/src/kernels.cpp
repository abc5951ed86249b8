#include "wrpn/kernels.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cstdlib>
#include <string>
#include <thread>

namespace wrpn {

namespace {

std::atomic<int> g_threads{0};

std::size_t lane_index(PackRole role, std::size_t r, std::size_t c) { return role == PackRole::lhs ? r : c; }

std::size_t depth_index(PackRole role, std::size_t r, std::size_t c) { return role == PackRole::lhs ? c : r; }

void check_codes_shape(const IntMatrix& m, const char* op) {
  require(m.rows > 0 && m.cols > 0 && m.values.size() == m.rows * m.cols, ErrorCode::shape_mismatch,
          std::string(op) + ": malformed code matrix");
}

std::size_t words_for(std::size_t depth) { return (depth + 63) / 64; }

// Runs fn(row_begin, row_end) over [0, rows) split across kernel_threads().
template <typename Fn>
void for_row_blocks(std::size_t rows, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(kernel_threads()), rows);
  if (threads <= 1) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(rows, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

int decode_nibble(std::uint8_t nibble, bool is_signed) {
  return is_signed ? static_cast<int>(static_cast<std::int8_t>(static_cast<std::uint8_t>(nibble << 4)) >> 4)
                   : static_cast<int>(nibble);
}

// products[a_byte * 256 + w_byte] = lo(a)*lo(w) + hi(a)*hi(w)
using PairTable = std::array<std::int16_t, 256 * 256>;

const PairTable& pair_table(bool a_signed, bool w_signed) {
  static const auto build = [](bool as, bool ws) {
    PairTable t{};
    for (int a = 0; a < 256; ++a)
      for (int w = 0; w < 256; ++w) {
        const int lo = decode_nibble(a & 0xf, as) * decode_nibble(w & 0xf, ws);
        const int hi = decode_nibble(a >> 4, as) * decode_nibble(w >> 4, ws);
        t[a * 256 + w] = static_cast<std::int16_t>(lo + hi);
      }
    return t;
  };
  static const PairTable uu = build(false, false), us = build(false, true), su = build(true, false),
                         ss = build(true, true);
  if (a_signed) return w_signed ? ss : su;
  return w_signed ? us : uu;
}

template <typename M>
const M& with_role(const M& m, PackRole role, M& scratch);

template <>
const PackedInt4Matrix& with_role(const PackedInt4Matrix& m, PackRole role, PackedInt4Matrix& scratch) {
  if (m.role == role) return m;
  scratch = pack_int4(unpack(m), m.is_signed, role);
  return scratch;
}

template <>
const PackedTernaryMatrix& with_role(const PackedTernaryMatrix& m, PackRole role, PackedTernaryMatrix& scratch) {
  if (m.role == role) return m;
  scratch = pack_ternary(unpack(m), role, m.scale);
  return scratch;
}

template <>
const PackedBinaryMatrix& with_role(const PackedBinaryMatrix& m, PackRole role, PackedBinaryMatrix& scratch) {
  if (m.role == role) return m;
  scratch = pack_binary(unpack(m), m.domain, role, m.scale);
  return scratch;
}

void check_inner(std::size_t a_cols, std::size_t b_rows, const char* op) {
  require(a_cols == b_rows, ErrorCode::shape_mismatch,
          std::string(op) + ": inner dimensions differ (" + std::to_string(a_cols) + " vs " +
              std::to_string(b_rows) + ")");
}

}  // namespace

int kernel_threads() {
  int n = g_threads.load();
  if (n > 0) return n;
  if (const char* env = std::getenv("WRPN_NUM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void set_kernel_threads(int n) { g_threads.store(std::max(0, n)); }

PackedInt4Matrix pack_int4(const IntMatrix& codes, bool is_signed, PackRole role) {
  check_codes_shape(codes, "pack_int4");
  const int lo = is_signed ? -8 : 0, hi = is_signed ? 7 : 15;
  PackedInt4Matrix m;
  m.rows = codes.rows;
  m.cols = codes.cols;
  m.is_signed = is_signed;
  m.role = role;
  m.lane_bytes = (m.depth() + 1) / 2;
  m.payload.assign(m.lanes() * m.lane_bytes, 0);
  for (std::size_t r = 0; r < codes.rows; ++r) {
    for (std::size_t c = 0; c < codes.cols; ++c) {
      const int v = codes.at(r, c);
      require(v >= lo && v <= hi, ErrorCode::domain, [&] {
        return "pack_int4: code " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "]";
      });
      const std::size_t lane = lane_index(role, r, c);
      const std::size_t k = depth_index(role, r, c);
      auto& byte = m.payload[lane * m.lane_bytes + k / 2];
      const auto nib = static_cast<std::uint8_t>(v & 0xf);
      byte |= (k % 2 == 0) ? nib : static_cast<std::uint8_t>(nib << 4);
    }
  }
  return m;
}

IntMatrix unpack(const PackedInt4Matrix& m) {
  IntMatrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t lane = lane_index(m.role, r, c);
      const std::size_t k = depth_index(m.role, r, c);
      const std::uint8_t byte = m.payload[lane * m.lane_bytes + k / 2];
      out.at(r, c) = decode_nibble(k % 2 == 0 ? (byte & 0xf) : (byte >> 4), m.is_signed);
    }
  return out;
}

PackedTernaryMatrix pack_ternary(const IntMatrix& codes, PackRole role, float scale) {
  check_codes_shape(codes, "pack_ternary");
  PackedTernaryMatrix m;
  m.rows = codes.rows;
  m.cols = codes.cols;
  m.role = role;
  m.scale = scale;
  m.lane_words = words_for(m.depth());
  m.nonzero.assign(m.lanes() * m.lane_words, 0);
  m.sign.assign(m.lanes() * m.lane_words, 0);
  for (std::size_t r = 0; r < codes.rows; ++r)
    for (std::size_t c = 0; c < codes.cols; ++c) {
      const int v = codes.at(r, c);
      require(v >= -1 && v <= 1, ErrorCode::domain,
              [&] { return "pack_ternary: code " + std::to_string(v) + " not in {-1,0,1}"; });
      if (v == 0) continue;
      const std::size_t k = depth_index(role, r, c);
      const std::size_t word = lane_index(role, r, c) * m.lane_words + k / 64;
      const std::uint64_t bit = std::uint64_t{1} << (k % 64);
      m.nonzero[word] |= bit;
      if (v < 0) m.sign[word] |= bit;
    }
  return m;
}

PackedTernaryMatrix ternary_from_bitplanes(std::size_t rows, std::size_t cols, PackRole role,
                                           std::vector<std::uint64_t> nonzero, std::vector<std::uint64_t> sign,
                                           float scale) {
  PackedTernaryMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.role = role;
  m.scale = scale;
  m.lane_words = words_for(m.depth());
  require(rows > 0 && cols > 0 && nonzero.size() == m.lanes() * m.lane_words && sign.size() == nonzero.size(),
          ErrorCode::shape_mismatch, "ternary_from_bitplanes: bitplane sizes do not match the shape");
  const std::size_t tail = m.depth() % 64;
  const std::uint64_t pad_mask = tail == 0 ? 0 : ~((std::uint64_t{1} << tail) - 1);
  for (std::size_t i = 0; i < nonzero.size(); ++i) {
    require((sign[i] & ~nonzero[i]) == 0, ErrorCode::domain,
            "ternary_from_bitplanes: sign bit set where the nonzero bit is clear");
    if (i % m.lane_words == m.lane_words - 1)
      require(((nonzero[i] | sign[i]) & pad_mask) == 0, ErrorCode::domain, "ternary_from_bitplanes: padding bits set");
  }
  m.nonzero = std::move(nonzero);
  m.sign = std::move(sign);
  return m;
}

IntMatrix unpack(const PackedTernaryMatrix& m) {
  IntMatrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t k = depth_index(m.role, r, c);
      const std::size_t word = lane_index(m.role, r, c) * m.lane_words + k / 64;
      const std::uint64_t bit = std::uint64_t{1} << (k % 64);
      out.at(r, c) = (m.nonzero[word] & bit) ? ((m.sign[word] & bit) ? -1 : 1) : 0;
    }
  return out;
}

PackedBinaryMatrix pack_binary(const IntMatrix& codes, BinaryDomain domain, PackRole role, float scale) {
  check_codes_shape(codes, "pack_binary");
  PackedBinaryMatrix m;
  m.rows = codes.rows;
  m.cols = codes.cols;
  m.role = role;
  m.domain = domain;
  m.scale = scale;
  m.lane_words = words_for(m.depth());
  m.bits.assign(m.lanes() * m.lane_words, 0);
  const int off = domain == BinaryDomain::zero_one ? 0 : -1;
  for (std::size_t r = 0; r < codes.rows; ++r)
    for (std::size_t c = 0; c < codes.cols; ++c) {
      const int v = codes.at(r, c);
      require(v == 1 || v == off, ErrorCode::domain, [&] {
        return "pack_binary: code " + std::to_string(v) +
               (domain == BinaryDomain::zero_one ? " not in {0,1}" : " not in {-1,+1}");
      });
      if (v != 1) continue;
      const std::size_t k = depth_index(role, r, c);
      m.bits[lane_index(role, r, c) * m.lane_words + k / 64] |= std::uint64_t{1} << (k % 64);
    }
  return m;
}

IntMatrix unpack(const PackedBinaryMatrix& m) {
  IntMatrix out(m.rows, m.cols);
  const int zero = m.domain == BinaryDomain::zero_one ? 0 : -1;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t k = depth_index(m.role, r, c);
      const std::uint64_t word = m.bits[lane_index(m.role, r, c) * m.lane_words + k / 64];
      out.at(r, c) = (word >> (k % 64)) & 1 ? 1 : zero;
    }
  return out;
}

IntMatrix gemm_i4i4(const PackedInt4Matrix& acts_in, const PackedInt4Matrix& weights_in) {
  check_inner(acts_in.cols, weights_in.rows, "gemm_i4i4");
  require(acts_in.cols <= kMaxInt4Depth, ErrorCode::invalid_argument, "gemm_i4i4: K exceeds accumulator headroom");
  PackedInt4Matrix sa, sw;
  const auto& acts = with_role(acts_in, PackRole::lhs, sa);
  const auto& weights = with_role(weights_in, PackRole::rhs, sw);
  const PairTable& table = pair_table(acts.is_signed, weights.is_signed);
  const std::size_t m = acts.rows, n = weights.cols, lane = acts.lane_bytes;
  IntMatrix out(m, n);
  for_row_blocks(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const std::uint8_t* a = acts.payload.data() + i * lane;
      for (std::size_t j = 0; j < n; ++j) {
        const std::uint8_t* w = weights.payload.data() + j * lane;
        std::int32_t acc = 0;
        for (std::size_t b = 0; b < lane; ++b) acc += table[(std::size_t{a[b]} << 8) | w[b]];
        out.values[i * n + j] = acc;
      }
    }
  });
  return out;
}

IntMatrix gemm_i4ter(const PackedInt4Matrix& acts_in, const PackedTernaryMatrix& weights_in) {
  check_inner(acts_in.cols, weights_in.rows, "gemm_i4ter");
  require(acts_in.cols <= kMaxBitDepth, ErrorCode::invalid_argument, "gemm_i4ter: K exceeds accumulator headroom");
  PackedInt4Matrix sa;
  PackedTernaryMatrix sw;
  const auto& acts = with_role(acts_in, PackRole::lhs, sa);
  const auto& weights = with_role(weights_in, PackRole::rhs, sw);
  const std::size_t m = acts.rows, n = weights.cols, k = acts.cols, words = weights.lane_words;
  IntMatrix out(m, n);
  for_row_blocks(m, [&](std::size_t r0, std::size_t r1) {
    std::vector<std::int32_t> row(words * 64, 0);
    for (std::size_t i = r0; i < r1; ++i) {
      const std::uint8_t* a = acts.payload.data() + i * acts.lane_bytes;
      for (std::size_t p = 0; p < k; ++p)
        row[p] = decode_nibble(p % 2 == 0 ? (a[p / 2] & 0xf) : (a[p / 2] >> 4), acts.is_signed);
      for (std::size_t j = 0; j < n; ++j) {
        const std::uint64_t* nz = weights.nonzero.data() + j * words;
        const std::uint64_t* sg = weights.sign.data() + j * words;
        std::int32_t acc = 0;
        for (std::size_t wi = 0; wi < words; ++wi) {
          const std::uint64_t pos = nz[wi] & ~sg[wi];
          const std::uint64_t neg = nz[wi] & sg[wi];
          const std::int32_t* seg = row.data() + wi * 64;
          for (unsigned b = 0; b < 64; ++b) {
            const auto take_pos = -static_cast<std::int32_t>((pos >> b) & 1);
            const auto take_neg = -static_cast<std::int32_t>((neg >> b) & 1);
            acc += seg[b] & take_pos;
            acc -= seg[b] & take_neg;
          }
        }
        out.values[i * n + j] = acc;
      }
    }
  });
  return out;
}

IntMatrix gemm_binary(const PackedBinaryMatrix& acts_in, const PackedBinaryMatrix& weights_in) {
  check_inner(acts_in.cols, weights_in.rows, "gemm_binary");
  require(acts_in.domain == BinaryDomain::zero_one && weights_in.domain == BinaryDomain::plus_minus_one,
          ErrorCode::invalid_argument, "gemm_binary: expects {0,1} activations and {-1,+1} weights");
  PackedBinaryMatrix sa, sw;
  const auto& acts = with_role(acts_in, PackRole::lhs, sa);
  const auto& weights = with_role(weights_in, PackRole::rhs, sw);
  const std::size_t m = acts.rows, n = weights.cols, words = acts.lane_words;
  IntMatrix out(m, n);
  for_row_blocks(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const std::uint64_t* a = acts.bits.data() + i * words;
      for (std::size_t j = 0; j < n; ++j) {
        const std::uint64_t* w = weights.bits.data() + j * words;
        std::int32_t plus = 0, minus = 0;
        for (std::size_t wi = 0; wi < words; ++wi) {
          plus += std::popcount(a[wi] & w[wi]);
          minus += std::popcount(a[wi] & ~w[wi]);
        }
        out.values[i * n + j] = plus - minus;
      }
    }
  });
  return out;
}

IntMatrix gemm_xnor(const PackedBinaryMatrix& acts_in, const PackedBinaryMatrix& weights_in) {
  check_inner(acts_in.cols, weights_in.rows, "gemm_xnor");
  require(acts_in.domain == BinaryDomain::plus_minus_one && weights_in.domain == BinaryDomain::plus_minus_one,
          ErrorCode::invalid_argument, "gemm_xnor: expects {-1,+1} on both operands");
  PackedBinaryMatrix sa, sw;
  const auto& acts = with_role(acts_in, PackRole::lhs, sa);
  const auto& weights = with_role(weights_in, PackRole::rhs, sw);
  const std::size_t m = acts.rows, n = weights.cols, k = acts.cols, words = acts.lane_words;
  IntMatrix out(m, n);
  for_row_blocks(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const std::uint64_t* a = acts.bits.data() + i * words;
      for (std::size_t j = 0; j < n; ++j) {
        const std::uint64_t* w = weights.bits.data() + j * words;
        std::int32_t differ = 0;
        // Padding bits are zero in both lanes, so they never count as a mismatch.
        for (std::size_t wi = 0; wi < words; ++wi) differ += std::popcount(a[wi] ^ w[wi]);
        out.values[i * n + j] = static_cast<std::int32_t>(k) - 2 * differ;
      }
    }
  });
  return out;
}

IntMatrix gemm_int_ref(const IntMatrix& a, const IntMatrix& b) {
  check_inner(a.cols, b.rows, "gemm_int_ref");
  IntMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      std::int64_t acc = 0;
      for (std::size_t p = 0; p < a.cols; ++p) acc += std::int64_t{a.at(i, p)} * b.at(p, j);
      out.at(i, j) = static_cast<std::int32_t>(acc);
    }
  return out;
}

Tensor dequantize_accumulators(const IntMatrix& acc, float scale_w, float scale_a) {
  require(scale_w > 0.0f && scale_a > 0.0f, ErrorCode::domain, "dequantize_accumulators: scales must be positive");
  Tensor out({acc.rows, acc.cols});
  const double s = static_cast<double>(scale_w) * static_cast<double>(scale_a);
  for (std::size_t i = 0; i < acc.values.size(); ++i) out[i] = static_cast<float>(acc.values[i] * s);
  return out;
}

}  // namespace wrpn
