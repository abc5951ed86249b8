// Independent reference implementations for the tests. Written against the
// formulas directly, sharing no code with the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

// Half-away-from-zero rounding without std::round.
inline long long round_half_away(double x) {
  const double a = std::fabs(x);
  long long r = static_cast<long long>(std::floor(a));
  if (a - static_cast<double>(r) >= 0.5) ++r;
  return x < 0 ? -r : r;
}

inline double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

// w_k = round((2^{k-1}-1) w) / (2^{k-1}-1)
inline long long wrpn_weight_code(double w, int k) {
  const long long levels = (1LL << (k - 1)) - 1;
  return round_half_away(clamp(w, -1, 1) * static_cast<double>(levels));
}
inline double wrpn_weight(double w, int k) {
  const long long levels = (1LL << (k - 1)) - 1;
  return static_cast<double>(wrpn_weight_code(w, k)) / static_cast<double>(levels);
}

// a_k = round((2^k-1) a) / (2^k-1)
inline long long wrpn_act_code(double a, int k) {
  const long long levels = (1LL << k) - 1;
  return round_half_away(clamp(a, 0, 1) * static_cast<double>(levels));
}
inline double wrpn_act(double a, int k) {
  const long long levels = (1LL << k) - 1;
  return static_cast<double>(wrpn_act_code(a, k)) / static_cast<double>(levels);
}

// w^k = 2 quantize_k(tanh(w) / (2 max|tanh|) + 1/2) - 1
inline std::vector<double> dorefa(const std::vector<double>& w, int k) {
  double m = 0;
  for (double v : w) m = std::fmax(m, std::fabs(std::tanh(v)));
  std::vector<double> out;
  for (double v : w) out.push_back(2.0 * wrpn_act(std::tanh(v) / (2.0 * m) + 0.5, k) - 1.0);
  return out;
}

// Plain 7-deep loop, output-major. NCHW input, OIHW weights.
template <typename T>
std::vector<T> conv2d(const std::vector<T>& x, const std::vector<T>& w, int n, int c, int h, int wd, int o, int kh,
                      int kw, int stride, int pad) {
  const int oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<T> y(static_cast<size_t>(n) * o * oh * ow, T(0));
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = 0;
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int r = i * stride - pad + u, s = j * stride - pad + v;
                if (r < 0 || r >= h || s < 0 || s >= wd) continue;
                acc += x[((static_cast<size_t>(b) * c + ic) * h + r) * wd + s] *
                       w[((static_cast<size_t>(oc) * c + ic) * kh + u) * kw + v];
              }
          y[((static_cast<size_t>(b) * o + oc) * oh + i) * ow + j] = acc;
        }
  return y;
}

template <typename T>
std::vector<T> matmul(const std::vector<T>& a, const std::vector<T>& b, int m, int k, int n) {
  std::vector<T> c(static_cast<size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
      c[static_cast<size_t>(i) * n + j] = acc;
    }
  return c;
}

inline std::vector<int64_t> int_gemm(const std::vector<int>& a, const std::vector<int>& b, int m, int k, int n) {
  std::vector<int64_t> c(static_cast<size_t>(m) * n, 0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p)
        c[static_cast<size_t>(i) * n + j] += int64_t{a[static_cast<size_t>(i) * k + p]} * b[static_cast<size_t>(p) * n + j];
  return c;
}

inline std::vector<int> random_ints(size_t count, int lo, int hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<int> v(count);
  for (auto& x : v) x = d(rng);
  return v;
}

// Binary ±1 with zero excluded.
inline std::vector<int> random_signs(size_t count, std::mt19937_64& rng) {
  std::vector<int> v = random_ints(count, 0, 1, rng);
  for (auto& x : v) x = x ? 1 : -1;
  return v;
}

}  // namespace oracle
