#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace wrpn {

enum class BenchMode { fp32, i4i4, i4ter, binary, xnor };

std::string to_string(BenchMode mode);
BenchMode parse_bench_mode(const std::string& name);
std::vector<BenchMode> all_bench_modes();

// Operand widths a mode computes with; fp32 is (32, 32).
int bench_bits_a(BenchMode mode);
int bench_bits_w(BenchMode mode);

// Bytes one K-long weight operand occupies once packed: ceil(bits * K / 8).
// 4K for fp32, K/2 for INT4, K/4 for ternary bitplanes, K/8 for one bit.
std::uint64_t packed_operand_bytes(BenchMode mode, std::uint64_t depth);

struct BenchConfig {
  std::size_t m = 256;
  std::size_t n = 256;
  std::size_t k = 256;
  std::vector<BenchMode> modes = all_bench_modes();
  int reps = 5;
  std::uint64_t seed = 1;
};

struct BenchRow {
  BenchMode mode = BenchMode::fp32;
  std::size_t m = 0, n = 0, k = 0;
  double ns_per_call = 0;
  double effective_gops = 0;   // 2*M*N*K / ns
  std::uint64_t bytes_per_operand = 0;
  double speedup_vs_fp32 = 0;  // 0 when fp32 was not timed
  double first_order_efficiency = 0;
};

// Times each mode on random operands (best of `reps` calls). fp32 runs a
// plain i-k-j float GEMM so the speed-ups compare like for like.
std::vector<BenchRow> bench_gemm(const BenchConfig& config);

// mode,M,N,K,ns_per_call,effective_GOPS,bytes_per_operand,speedup_vs_fp32,first_order_efficiency
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace wrpn
