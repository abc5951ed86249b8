// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
//   wrpn_acceptance [--only N[,N...]]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "wrpn/analyzer.hpp"
#include "wrpn/bench.hpp"
#include "wrpn/kernels.hpp"
#include "wrpn/network.hpp"
#include "wrpn/quant.hpp"
#include "wrpn/repro.hpp"
#include "wrpn/train.hpp"

using namespace wrpn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail = what;
    pass = false;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Tensor uniform(size_t n, float lo, float hi, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t({n});
  for (auto& v : t.values()) v = d(rng);
  return t;
}

IntMatrix matrix(const std::vector<int>& v, size_t r, size_t c) {
  IntMatrix m(r, c);
  std::copy(v.begin(), v.end(), m.values.begin());
  return m;
}

bool equal(const IntMatrix& got, const std::vector<int64_t>& want) {
  if (got.values.size() != want.size()) return false;
  for (size_t i = 0; i < want.size(); ++i)
    if (int64_t{got.values[i]} != want[i]) return false;
  return true;
}

NetworkDescriptor shipped(const std::string& name) {
  return load_descriptor(test::data_dir() / "descriptors" / (name + ".json"));
}

// 1 -------------------------------------------------------------------------
Outcome quantizer_fidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  const Tensor w = uniform(100000, -1, 1, 1), a = uniform(100000, 0, 1, 2);
  Tensor ws = w, as = a;
  std::sort(ws.values().begin(), ws.values().end());
  std::sort(as.values().begin(), as.values().end());
  for (int k : {1, 2, 4, 8}) {
    const std::string tag = "k=" + std::to_string(k) + ": ";
    const Tensor qa = quantize_acts_wrpn(a, k).dequantize();
    const double half_a = 0.5 / double((1 << k) - 1);
    double err = 0;
    for (size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(double(qa[i]) - a[i]));
    o.expect(err <= half_a + 1e-7, tag + "activation error above half step");
    o.expect(quantize_acts_wrpn(qa, k).dequantize() == qa, tag + "activation quantizer not idempotent");
    const Tensor qas = quantize_acts_wrpn(as, k).dequantize();
    o.expect(std::is_sorted(qas.values().begin(), qas.values().end()), tag + "activation quantizer not monotone");
    o.expect(std::set<float>(qa.values().begin(), qa.values().end()).size() == size_t(1) << k,
             tag + "activation level count");

    Tensor qw;
    size_t levels;
    if (k == 1) {
      // one-bit weights are BWN: {-s, +s}
      qw = binarize_weights_bwn(w).dequantize();
      levels = 2;
      o.expect(binarize_weights_bwn(qw).dequantize() == qw, tag + "BWN not idempotent");
      const Tensor qws = binarize_weights_bwn(ws).dequantize();
      o.expect(std::is_sorted(qws.values().begin(), qws.values().end()), tag + "BWN not monotone");
    } else {
      qw = quantize_weights_wrpn(w, k).dequantize();
      levels = (size_t(1) << k) - 1;
      const double half_w = 0.5 / double((1 << (k - 1)) - 1);
      double e = 0;
      for (size_t i = 0; i < w.size(); ++i) e = std::max(e, std::abs(double(qw[i]) - w[i]));
      o.expect(e <= half_w + 1e-7, tag + "weight error above half step");
      o.expect(quantize_weights_wrpn(qw, k).dequantize() == qw, tag + "weight quantizer not idempotent");
      const Tensor qws = quantize_weights_wrpn(ws, k).dequantize();
      o.expect(std::is_sorted(qws.values().begin(), qws.values().end()), tag + "weight quantizer not monotone");
    }
    o.expect(std::set<float>(qw.values().begin(), qw.values().end()).size() == levels, tag + "weight level count");
  }
  const double s = seconds_since(t0);
  o.expect(s < 10, "took " + fmt("%.1f s", s));
  if (o.pass) o.detail = fmt("k in {1,2,4,8}, 1e5 values each, %.2f s (1-bit weights: BWN, 2 levels)", s);
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome point_checks() {
  Outcome o;
  auto w = [](float x, int k) { return quantize_weights_wrpn(Tensor({1}, {x}), k).dequantize()[0]; };
  auto a = [](float x, int k) { return quantize_acts_wrpn(Tensor({1}, {x}), k).dequantize()[0]; };
  o.expect(w(0.6f, 2) == 1.0f, "k=2 w=0.6");
  o.expect(w(0.3f, 4) == float(oracle::wrpn_weight(0.3f, 4)) && quantize_weights_wrpn(Tensor({1}, {0.3f}), 4).codes[0] == 2,
           "k=4 w=0.3");
  o.expect(w(-0.5f, 2) == float(oracle::wrpn_weight(-0.5, 2)) && w(-0.5f, 2) == -1.0f, "k=2 w=-0.5 tie");
  o.expect(a(0.49f, 1) == 0.0f && a(0.51f, 1) == 1.0f, "k=1 activation threshold");
  o.expect(a(0.5f, 2) == float(oracle::wrpn_act(0.5, 2)) && quantize_acts_wrpn(Tensor({1}, {0.5f}), 2).codes[0] == 2,
           "k=2 a=0.5 tie");
  o.expect(a(1.0f, 4) == 1.0f && quantize_acts_wrpn(Tensor({1}, {1.0f}), 4).codes[0] == 15, "k=4 a=1");
  const Tensor d = quantize_weights_dorefa(Tensor({3}, {-1, 0, 1}), 2);
  const auto ref = oracle::dorefa({-1, 0, 1}, 2);
  for (int i = 0; i < 3; ++i) o.expect(d[i] == float(ref[i]), "dorefa [-1,0,1] element " + std::to_string(i));
  o.expect(d[1] == float(1.0 / 3), "dorefa 0 -> 1/3");
  o.expect(quantize_weights_dorefa(Tensor({2}, {-0.7f, 0.7f}), 4) == Tensor({2}, {-1, 1}), "dorefa extremes");
  const auto b = binarize_weights_bwn(Tensor({3}, {0.5f, -0.2f, 0.3f}));
  o.expect(b.codes == std::vector<int32_t>{1, -1, 1} && b.scale == float(1.0 / 3), "bwn [0.5,-0.2,0.3]");
  o.expect(clip_weights(Tensor({3}, {-5, 0, 5})) == Tensor({3}, {-1, 0, 1}), "clip");
  if (o.pass) o.detail = "wrpn, dorefa, bwn and clip examples equal the scalar oracles";
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome kernel_exactness() {
  Outcome o;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 128);
  size_t instances = 0;
  for (int t = 0; t < 1200; ++t) {
    const int m = dim(rng), k = dim(rng), n = dim(rng);
    std::vector<int> a, w;
    IntMatrix got;
    switch (t % 3) {
      case 0:
        a = oracle::random_ints(size_t(m) * k, 0, 15, rng);
        w = oracle::random_ints(size_t(k) * n, -8, 7, rng);
        got = gemm_i4i4(pack_int4(matrix(a, m, k), false, PackRole::lhs), pack_int4(matrix(w, k, n), true, PackRole::rhs));
        break;
      case 1:
        a = oracle::random_ints(size_t(m) * k, 0, 15, rng);
        w = oracle::random_ints(size_t(k) * n, -1, 1, rng);
        got = gemm_i4ter(pack_int4(matrix(a, m, k), false, PackRole::lhs), pack_ternary(matrix(w, k, n), PackRole::rhs));
        break;
      default:
        a = oracle::random_ints(size_t(m) * k, 0, 1, rng);
        w = oracle::random_signs(size_t(k) * n, rng);
        got = gemm_binary(pack_binary(matrix(a, m, k), BinaryDomain::zero_one, PackRole::lhs),
                          pack_binary(matrix(w, k, n), BinaryDomain::plus_minus_one, PackRole::rhs));
    }
    o.expect(equal(got, oracle::int_gemm(a, w, m, k, n)), "GEMM mismatch at instance " + std::to_string(t));
    ++instances;
  }
  // composition with quantize/dequantize
  double worst = 0;
  std::uniform_real_distribution<float> u01(0, 1), u11(-1, 1);
  for (int t = 0; t < 150; ++t) {
    const size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor a(Shape{m, k}), w(Shape{k, n});
    for (auto& v : a.values()) v = u01(rng);
    for (auto& v : w.values()) v = u11(rng);
    const int mode = t % 3;
    const auto qa = quantize_acts_wrpn(a, mode == 2 ? 1 : 4);
    const auto qw = mode == 0 ? quantize_weights_wrpn(w, 4) : mode == 1 ? quantize_weights_wrpn(w, 2) : binarize_weights_bwn(w);
    IntMatrix ca(m, k), cw(k, n);
    std::copy(qa.codes.begin(), qa.codes.end(), ca.values.begin());
    std::copy(qw.codes.begin(), qw.codes.end(), cw.values.begin());
    IntMatrix acc = mode == 0 ? gemm_i4i4(pack_int4(ca, false, PackRole::lhs), pack_int4(cw, true, PackRole::rhs))
                    : mode == 1
                        ? gemm_i4ter(pack_int4(ca, false, PackRole::lhs), pack_ternary(cw, PackRole::rhs))
                        : gemm_binary(pack_binary(ca, BinaryDomain::zero_one, PackRole::lhs),
                                      pack_binary(cw, BinaryDomain::plus_minus_one, PackRole::rhs));
    const Tensor got = dequantize_accumulators(acc, qw.scale, qa.scale);
    const Tensor da = qa.dequantize(), dw = qw.dequantize();
    const auto ref = oracle::matmul(std::vector<double>(da.values().begin(), da.values().end()),
                                    std::vector<double>(dw.values().begin(), dw.values().end()), int(m), int(k), int(n));
    double peak = 1e-30;
    for (double v : ref) peak = std::max(peak, std::abs(v));
    for (size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]) / peak);
  }
  o.expect(worst <= 1e-5, fmt("composition error %.2e", worst));
  if (o.pass) o.detail = std::to_string(instances) + " exact instances; composition max rel err " + fmt("%.1e", worst);
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome cost_tables() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto rep = run_repro(test::data_dir());
  const double s = seconds_since(t0);
  for (const auto& c : rep.cells)
    o.expect(c.pass, c.table + " " + c.network + " " + std::to_string(c.bits_a) + "A/" + std::to_string(c.bits_w) +
                         "W: " + fmt("computed %.4f vs %.2f", c.computed, c.reference));
  size_t cost_cells = 0;
  for (const auto& c : rep.cells) cost_cells += c.table.rfind("table", 0) == 0;
  o.expect(cost_cells == 25 + 9 + 5, "expected 39 table cells, found " + std::to_string(cost_cells));
  o.expect(s < 5, fmt("took %.2f s", s));
  if (o.pass) o.detail = repro_summary(rep).substr(0, repro_summary(rep).find('\n')) + fmt(", %.2f s", s);
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome first_order() {
  Outcome o;
  o.expect(first_order_efficiency(4, 4) == 8.0, "(4,4)");
  o.expect(first_order_efficiency(1, 1) == 32.0, "(1,1)");
  o.expect(first_order_efficiency(32, 32) == 1.0, "(32,32)");
  if (o.pass) o.detail = "(4,4)=8x (1,1)=32x (32,32)=1x";
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome footprint() {
  Outcome o;
  for (const char* name : {"alexnet", "alexnet_caffe", "resnet34", "resnet50", "inception_bn", "desk_cnn", "desk_mlp"}) {
    const auto d = shipped(name);
    double prev = 0;
    for (size_t b : {1, 2, 4, 8, 16, 32, 64, 128, 256, 512}) {
      const double f = memory_footprint(d, b, Phase::training).activation_fraction;
      o.expect(f > prev && f < 1, std::string(name) + " fraction not increasing at batch " + std::to_string(b));
      prev = f;
    }
  }
  const double r50 = memory_footprint(shipped("resnet50"), 128, Phase::training).activation_fraction;
  o.expect(r50 >= 0.95, fmt("resnet50 training fraction %.4f", r50));
  const auto toy = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"toy","input":[1,4,4],"layers":[
    {"id":"c1","kind":"conv","out_channels":2,"kernel":3,"padding":1},{"id":"r1","kind":"relu"},
    {"id":"f","kind":"fc","out_channels":3}]})");
  // batch 4, FP32: ACT (16+32+32+3)*4*4 = 1328, W (18+96)*4 = 456, dZ = dX = 32*4*4 = 512
  o.expect(memory_footprint(toy, 4, Phase::training).total_bytes == 2808, "toy training total");
  o.expect(memory_footprint(toy, 4, Phase::inference).total_bytes == 1480, "toy inference total");
  if (o.pass) o.detail = fmt("monotone on 7 descriptors; resnet50 @128 = %.4f; toy 2808/1480 B", r50);
  return o;
}

// 7 -------------------------------------------------------------------------
double worst_fd_error(Network<double>& net, const TensorD& x, const std::vector<int>& labels) {
  const auto g = net.backward(net.forward(x, labels, Mode::train));
  double worst = 0;
  const double h = 1e-6;
  for (size_t p = 0; p < net.parameters().size(); ++p) {
    auto& v = net.parameters()[p].value;
    for (size_t i = 0; i < v.size(); ++i) {
      const double s = v[i];
      v[i] = s + h;
      const double up = net.forward(x, labels, Mode::train).loss;
      v[i] = s - h;
      const double dn = net.forward(x, labels, Mode::train).loss;
      v[i] = s;
      const double fd = (up - dn) / (2 * h), an = g.values[p][i];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-5}));
    }
  }
  return worst;
}

TensorD random_input(const NetworkDescriptor& d, size_t n, double lo, double hi, uint64_t seed) {
  TensorD x(Shape{n, d.input.channels, d.input.height, d.input.width});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : x.values()) v = u(rng);
  return x;
}

Outcome gradients() {
  Outcome o;
  const auto cnn = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"cnn","input":[2,6,6],"layers":[
    {"id":"c1","kind":"conv","out_channels":4,"kernel":3,"padding":1},{"id":"b1","kind":"batchnorm"},{"id":"r1","kind":"relu"},
    {"id":"p1","kind":"maxpool","kernel":2,"stride":2},
    {"id":"c2","kind":"conv","out_channels":6,"kernel":3,"padding":1},{"id":"b2","kind":"batchnorm"},{"id":"r2","kind":"relu"},
    {"id":"f1","kind":"fc","out_channels":12},{"id":"r3","kind":"relu"},
    {"id":"f2","kind":"fc","out_channels":4}]})");
  const std::vector<int> labels{0, 3, 1, 2, 1};
  BuildOptions fo;
  fo.seed = 2;
  auto fp = Network<double>::build(cnn, fo);
  o.expect(fp.scalar_parameter_count() <= 10000, "net too large");
  const double e_fp = worst_fd_error(fp, random_input(cnn, 5, -1, 1, 4), labels);
  o.expect(e_fp <= 1e-4, fmt("FP32 finite differences off by %.2e", e_fp));

  BuildOptions so;
  so.seed = 3;
  so.policy = PrecisionPolicy::uniform({4, 2});
  so.round_identity = true;
  auto ste = Network<double>::build(cnn, so);
  ste.parameters()[0].value[0] = 1.6;
  const double e_ste = worst_fd_error(ste, random_input(cnn, 5, -0.5, 1.5, 5), labels);
  o.expect(e_ste <= 1e-4, fmt("identity-substituted STE off by %.2e", e_ste));

  BuildOptions qo;
  qo.policy = PrecisionPolicy::uniform({4, 4});
  auto q = Network<float>::build(cnn, qo);
  q.parameters()[0].value[0] = 1.7f;
  q.parameters()[0].value[5] = -3.0f;
  const Tensor x = random_input(cnn, 5, 0, 1, 6).cast<float>();
  const auto g = q.backward(q.forward(x, labels, Mode::train));
  o.expect(g.values[0][0] == 0.0f && g.values[0][5] == 0.0f, "out-of-clip weight gradient is not zero");
  if (o.pass) o.detail = fmt("FD rel err %.1e; STE identity %.1e; clipped grads exactly 0", e_fp, e_ste);
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome desk_trend() {
  Outcome o;
  const auto t0 = Clock::now();
  std::ifstream f(test::data_dir() / "configs" / "desk_trend.json");
  if (!f) {
    o.expect(false, "data/configs/desk_trend.json missing");
    return o;
  }
  const auto j = nlohmann::json::parse(f);
  const auto desc = shipped(j.at("descriptor").get<std::string>());
  const auto train_set = load_dataset(j.at("train").get<std::string>(), 1);
  const auto eval_set = load_dataset(j.at("eval").get<std::string>(), 2);
  const TrainConfig cfg = parse_train_config(j.at("train_config").dump());
  const double reference = j.at("fp32_reference_top1").get<double>();
  const uint64_t seed = j.at("init_seed").get<uint64_t>();

  auto run = [&](double widen, int bits_a, int bits_w) {
    BuildOptions b;
    b.widen = widen;
    b.seed = seed;
    b.policy = PrecisionPolicy::standard(desc, {bits_a, bits_w});
    auto net = Network<float>::build(desc, b);
    train(net, train_set, nullptr, cfg);
    const double top1 = evaluate(net, eval_set);
    std::printf("  desk %gx %dA/%dW: top-1 %.2f\n", widen, bits_a, bits_w, top1);
    std::fflush(stdout);
    return top1;
  };
  const double fp = run(1, 32, 32);
  const double w4a2 = run(2, 4, 2);
  const double b1 = run(1, 1, 1);
  const double b2 = run(2, 1, 1);
  const double s = seconds_since(t0);
  o.expect(std::abs(fp - reference) <= 0.5, fmt("(a) FP32 %.2f vs documented %.2f", fp, reference));
  o.expect(w4a2 >= fp - 1.0, fmt("(b) 2x 4A/2W %.2f vs FP32 %.2f", w4a2, fp));
  o.expect(b1 < b2, fmt("(c) 1x 1A/1W %.2f not below 2x 1A/1W %.2f", b1, b2));
  o.expect(s <= 900, fmt("took %.0f s", s));
  const std::string summary = fmt("FP32 %.2f (ref %.2f), 2x 4A/2W %.2f", fp, reference, w4a2) +
                              fmt(", 1x/2x 1A/1W %.2f/%.2f", b1, b2) + fmt(", %.0f s", s);
  o.detail = o.pass ? summary : o.detail + "; " + summary;
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome storage() {
  Outcome o;
  for (uint64_t k : {64u, 256u, 4096u, 1u << 20}) {
    const uint64_t fp = packed_operand_bytes(BenchMode::fp32, k);
    o.expect(fp == 4 * k, "fp32 bytes");
    o.expect(fp == 8 * packed_operand_bytes(BenchMode::i4i4, k), "int4 not 8x at K=" + std::to_string(k));
    o.expect(fp == 32 * packed_operand_bytes(BenchMode::binary, k), "binary not 32x at K=" + std::to_string(k));
  }
  // and the real packed payloads
  IntMatrix codes(4096, 1, 1);
  o.expect(pack_int4(codes, true, PackRole::rhs).payload_bytes() == 2048, "packed int4 payload");
  o.expect(pack_binary(codes, BinaryDomain::plus_minus_one, PackRole::rhs).payload_bytes() == 512, "packed binary payload");
  if (o.pass) o.detail = "K=4096: 16384 B fp32, 2048 B int4 (8x), 512 B binary (32x)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"quantizer fidelity", quantizer_fidelity}, {"point checks", point_checks},
      {"kernel exactness", kernel_exactness},     {"cost-table reproduction", cost_tables},
      {"first-order efficiency", first_order},    {"footprint model", footprint},
      {"gradient correctness", gradients},        {"desk-scale trend", desk_trend},
      {"storage accounting", storage},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d %-24s %s  %s\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
