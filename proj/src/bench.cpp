#include "wrpn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <random>

#include "wrpn/analyzer.hpp"
#include "wrpn/error.hpp"
#include "wrpn/kernels.hpp"

namespace wrpn {

std::string to_string(BenchMode mode) {
  switch (mode) {
    case BenchMode::fp32: return "fp32";
    case BenchMode::i4i4: return "i4i4";
    case BenchMode::i4ter: return "i4ter";
    case BenchMode::binary: return "binary";
    case BenchMode::xnor: return "xnor";
  }
  return "?";
}

BenchMode parse_bench_mode(const std::string& name) {
  for (auto m : all_bench_modes())
    if (to_string(m) == name) return m;
  fail(ErrorCode::invalid_argument, "unknown bench mode '" + name + "' (fp32, i4i4, i4ter, binary, xnor)");
}

std::vector<BenchMode> all_bench_modes() {
  return {BenchMode::fp32, BenchMode::i4i4, BenchMode::i4ter, BenchMode::binary, BenchMode::xnor};
}

int bench_bits_a(BenchMode mode) {
  switch (mode) {
    case BenchMode::fp32: return 32;
    case BenchMode::i4i4:
    case BenchMode::i4ter: return 4;
    case BenchMode::binary:
    case BenchMode::xnor: return 1;
  }
  return 32;
}

int bench_bits_w(BenchMode mode) {
  switch (mode) {
    case BenchMode::fp32: return 32;
    case BenchMode::i4i4: return 4;
    case BenchMode::i4ter: return 2;
    case BenchMode::binary:
    case BenchMode::xnor: return 1;
  }
  return 32;
}

std::uint64_t packed_operand_bytes(BenchMode mode, std::uint64_t depth) {
  const std::uint64_t bits = static_cast<std::uint64_t>(bench_bits_w(mode)) * depth;
  return (bits + 7) / 8;
}

namespace {

IntMatrix random_codes(std::size_t rows, std::size_t cols, int lo, int hi, std::mt19937_64& rng, bool no_zero = false) {
  IntMatrix m(rows, cols);
  std::uniform_int_distribution<int> dist(lo, hi);
  for (auto& v : m.values) {
    do v = dist(rng);
    while (no_zero && v == 0);
  }
  return m;
}

void gemm_f32(const std::vector<float>& a, const std::vector<float>& b, std::vector<float>& c, std::size_t m,
              std::size_t n, std::size_t k) {
  std::fill(c.begin(), c.end(), 0.0f);
  for (std::size_t i = 0; i < m; ++i) {
    float* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      const float* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

template <typename Fn>
double best_ns(int reps, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  return best;
}

// Keeps the optimiser from discarding kernel results.
volatile std::int64_t g_sink = 0;

double time_mode(BenchMode mode, const BenchConfig& cfg, std::mt19937_64& rng) {
  const std::size_t m = cfg.m, n = cfg.n, k = cfg.k;
  switch (mode) {
    case BenchMode::fp32: {
      std::uniform_real_distribution<float> d(-1.0f, 1.0f);
      std::vector<float> a(m * k), b(k * n), c(m * n);
      for (auto& v : a) v = d(rng);
      for (auto& v : b) v = d(rng);
      return best_ns(cfg.reps, [&] {
        gemm_f32(a, b, c, m, n, k);
        g_sink = g_sink + static_cast<std::int64_t>(c[0]);
      });
    }
    case BenchMode::i4i4: {
      const auto a = pack_int4(random_codes(m, k, 0, 15, rng), false, PackRole::lhs);
      const auto w = pack_int4(random_codes(k, n, -7, 7, rng), true, PackRole::rhs);
      return best_ns(cfg.reps, [&] { g_sink = g_sink + gemm_i4i4(a, w).values[0]; });
    }
    case BenchMode::i4ter: {
      const auto a = pack_int4(random_codes(m, k, 0, 15, rng), false, PackRole::lhs);
      const auto w = pack_ternary(random_codes(k, n, -1, 1, rng), PackRole::rhs);
      return best_ns(cfg.reps, [&] { g_sink = g_sink + gemm_i4ter(a, w).values[0]; });
    }
    case BenchMode::binary: {
      const auto a = pack_binary(random_codes(m, k, 0, 1, rng), BinaryDomain::zero_one, PackRole::lhs);
      auto wc = random_codes(k, n, 0, 1, rng);
      for (auto& v : wc.values) v = v ? 1 : -1;
      const auto w = pack_binary(wc, BinaryDomain::plus_minus_one, PackRole::rhs);
      return best_ns(cfg.reps, [&] { g_sink = g_sink + gemm_binary(a, w).values[0]; });
    }
    case BenchMode::xnor: {
      auto ac = random_codes(m, k, 0, 1, rng), wc = random_codes(k, n, 0, 1, rng);
      for (auto& v : ac.values) v = v ? 1 : -1;
      for (auto& v : wc.values) v = v ? 1 : -1;
      const auto a = pack_binary(ac, BinaryDomain::plus_minus_one, PackRole::lhs);
      const auto w = pack_binary(wc, BinaryDomain::plus_minus_one, PackRole::rhs);
      return best_ns(cfg.reps, [&] { g_sink = g_sink + gemm_xnor(a, w).values[0]; });
    }
  }
  return 0;
}

}  // namespace

std::vector<BenchRow> bench_gemm(const BenchConfig& config) {
  require(config.m > 0 && config.n > 0 && config.k > 0, ErrorCode::invalid_argument, "bench: sizes must be positive");
  require(config.reps > 0, ErrorCode::invalid_argument, "bench: reps must be positive");
  require(!config.modes.empty(), ErrorCode::invalid_argument, "bench: no modes selected");
  require(config.k <= kMaxInt4Depth, ErrorCode::invalid_argument, "bench: K exceeds the INT4 accumulator bound");

  std::mt19937_64 rng(config.seed);
  std::vector<BenchRow> rows;
  double fp32_ns = 0;
  for (auto mode : config.modes) {
    BenchRow r;
    r.mode = mode;
    r.m = config.m;
    r.n = config.n;
    r.k = config.k;
    r.ns_per_call = time_mode(mode, config, rng);
    r.effective_gops = 2.0 * static_cast<double>(r.m) * static_cast<double>(r.n) * static_cast<double>(r.k) /
                       std::max(r.ns_per_call, 1.0);
    r.bytes_per_operand = packed_operand_bytes(mode, r.k);
    r.first_order_efficiency = first_order_efficiency(bench_bits_a(mode), bench_bits_w(mode));
    if (mode == BenchMode::fp32) fp32_ns = r.ns_per_call;
    rows.push_back(r);
  }
  if (fp32_ns > 0)
    for (auto& r : rows) r.speedup_vs_fp32 = fp32_ns / std::max(r.ns_per_call, 1.0);
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "mode,M,N,K,ns_per_call,effective_GOPS,bytes_per_operand,speedup_vs_fp32,first_order_efficiency\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.0f,%.4f,%llu,%.3f,%.4f\n", to_string(r.mode).c_str(), r.m, r.n,
                  r.k, r.ns_per_call, r.effective_gops, static_cast<unsigned long long>(r.bytes_per_operand),
                  r.speedup_vs_fp32, r.first_order_efficiency);
    out += buf;
  }
  return out;
}

}  // namespace wrpn
