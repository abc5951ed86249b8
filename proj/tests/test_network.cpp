#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "wrpn/network.hpp"

using namespace wrpn;

namespace {

const char* kMlp = R"({"format":"wrpn-descriptor/1","name":"mlp","input":[1,1,6],"layers":[
  {"id":"f1","kind":"fc","out_channels":8},{"id":"b1","kind":"batchnorm"},{"id":"r1","kind":"relu"},
  {"id":"f2","kind":"fc","out_channels":7},{"id":"r2","kind":"relu"},
  {"id":"f3","kind":"fc","out_channels":3}]})";

const char* kCnn = R"({"format":"wrpn-descriptor/1","name":"cnn","input":[2,6,6],"layers":[
  {"id":"c1","kind":"conv","out_channels":3,"kernel":3,"padding":1},{"id":"b1","kind":"batchnorm"},{"id":"r1","kind":"relu"},
  {"id":"p1","kind":"maxpool","kernel":2,"stride":2},
  {"id":"c2","kind":"conv","out_channels":4,"kernel":3,"stride":1,"padding":1},{"id":"r2","kind":"relu"},
  {"id":"c3","kind":"conv","out_channels":4,"kernel":2,"stride":2},{"id":"b3","kind":"batchnorm"},{"id":"r3","kind":"relu"},
  {"id":"gap","kind":"avgpool","global":true},
  {"id":"f","kind":"fc","out_channels":3}]})";

template <typename T>
BasicTensor<T> random_batch(const Shape& per_sample, size_t n, double lo, double hi, uint64_t seed) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  BasicTensor<T> x(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : x.values()) v = static_cast<T>(d(rng));
  return x;
}

Shape input_shape(const NetworkDescriptor& d) { return {d.input.channels, d.input.height, d.input.width}; }

// Central differences of the training-mode loss against every parameter.
void check_gradients(Network<double>& net, const TensorD& x, const std::vector<int>& labels, double tol) {
  const auto r = net.forward(x, labels, Mode::train);
  const auto g = net.backward(r);
  const double h = 1e-6;
  size_t checked = 0;
  for (size_t p = 0; p < net.parameters().size(); ++p) {
    auto& value = net.parameters()[p].value;
    for (size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = net.forward(x, labels, Mode::train).loss;
      value[i] = saved - h;
      const double down = net.forward(x, labels, Mode::train).loss;
      value[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = g.values[p][i];
      CAPTURE(net.parameters()[p].name);
      CAPTURE(i);
      REQUIRE(std::abs(an - fd) <= tol * std::max({std::abs(an), std::abs(fd), 1e-5}));
      ++checked;
    }
  }
  CHECK(checked == net.scalar_parameter_count());
}

}  // namespace

TEST_CASE("build widens hidden channels only") {
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"s","input":[3,8,8],"layers":[
    {"id":"a","kind":"conv","out_channels":64,"kernel":3,"padding":1},{"id":"r","kind":"relu"},
    {"id":"b","kind":"conv","out_channels":128,"kernel":3,"padding":1},
    {"id":"c","kind":"fc","out_channels":10}]})");
  BuildOptions o;
  o.widen = 2;
  const auto net = Network<float>::build(d, o);
  CHECK(net.parameters()[0].value.shape() == Shape{128, 3, 3, 3});
  CHECK(net.parameters()[2].value.shape() == Shape{256, 128, 3, 3});
  CHECK(net.parameters()[4].value.shape() == Shape{10, 256 * 64});
  o.widen = 1;
  CHECK(Network<float>::build(d, o).parameters()[2].value.shape() == Shape{128, 64, 3, 3});
  o.widen = 0.5;
  CHECK_THROWS_AS(Network<float>::build(d, o), Error);
  o.widen = 1;
  o.policy = PrecisionPolicy::uniform({4, 4});
  o.policy.exempt.insert("zz");
  CHECK_THROWS_AS(Network<float>::build(d, o), Error);
}

TEST_CASE("non-sequential descriptors are rejected") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "resnet34.json");
  CHECK_THROWS_AS(Network<float>::build(d, BuildOptions{}), Error);
}

TEST_CASE("finite differences: FP32 MLP and CNN") {
  for (const char* text : {kMlp, kCnn}) {
    const auto d = parse_descriptor(text);
    BuildOptions o;
    o.seed = 5;
    auto net = Network<double>::build(d, o);
    CHECK(net.scalar_parameter_count() <= 10000);
    const auto x = random_batch<double>(input_shape(d), 5, -1, 1, 9);
    check_gradients(net, x, {0, 1, 2, 1, 0}, 1e-4);
  }
}

TEST_CASE("STE: with rounding replaced by identity, gradients match finite differences") {
  for (const char* text : {kMlp, kCnn}) {
    const auto d = parse_descriptor(text);
    BuildOptions o;
    o.seed = 6;
    o.policy = PrecisionPolicy::uniform({4, 2});
    o.round_identity = true;
    auto net = Network<double>::build(d, o);
    // push a few weights past the clip range
    auto& w = net.parameters()[0].value;
    w[0] = 1.7;
    w[1] = -1.4;
    const auto x = random_batch<double>(input_shape(d), 4, -0.5, 1.5, 10);
    check_gradients(net, x, {2, 1, 0, 1}, 1e-4);
  }
}

TEST_CASE("out-of-clip weights get exactly zero gradient") {
  const auto d = parse_descriptor(kMlp);
  BuildOptions o;
  o.policy = PrecisionPolicy::uniform({4, 4});
  auto net = Network<float>::build(d, o);
  auto& w = net.parameters()[0].value;
  w[0] = 1.7f;
  w[3] = -2.0f;
  const auto x = random_batch<float>(input_shape(d), 8, 0, 1, 3);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  const auto g = net.backward(net.forward(x, labels, Mode::train));
  CHECK(g.values[0][0] == 0.0f);
  CHECK(g.values[0][3] == 0.0f);
  size_t nonzero = 0;
  for (float v : g.values[0].values()) nonzero += v != 0.0f;
  CHECK(nonzero > 0);
}

TEST_CASE("STE passes the gradient through rounding") {
  // One fc layer, 2-bit weights, FP32 activations: dL/dW = dL/dy x^T, the same
  // as for the layer with weights replaced by their quantized values.
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"one","input":[1,1,4],"layers":[{"id":"f","kind":"fc","out_channels":3}]})");
  BuildOptions q;
  q.policy = PrecisionPolicy::uniform({32, 2});
  auto qnet = Network<double>::build(d, q);
  auto fnet = Network<double>::build(d, BuildOptions{});
  fnet.parameters()[0].value = qnet.effective_weights(0);
  const auto x = random_batch<double>(input_shape(d), 3, -1, 1, 4);
  const std::vector<int> labels{0, 2, 1};
  const auto rq = qnet.forward(x, labels, Mode::train);
  const auto rf = fnet.forward(x, labels, Mode::train);
  CHECK(rq.loss == rf.loss);
  const auto gq = qnet.backward(rq), gf = fnet.backward(rf);
  for (size_t i = 0; i < gq.values[0].size(); ++i) CHECK(gq.values[0][i] == doctest::Approx(gf.values[0][i]).epsilon(1e-12));
}

TEST_CASE("k=2 weights at +-0.6 act as +-1") {
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"one","input":[1,1,4],"layers":[{"id":"f","kind":"fc","out_channels":2}]})");
  BuildOptions q;
  q.policy = PrecisionPolicy::uniform({32, 2});
  auto qnet = Network<float>::build(d, q);
  auto fnet = Network<float>::build(d, BuildOptions{});
  auto& w = qnet.parameters()[0].value;
  auto& wf = fnet.parameters()[0].value;
  for (size_t i = 0; i < w.size(); ++i) {
    w[i] = i % 3 ? 0.6f : -0.6f;
    wf[i] = i % 3 ? 1.0f : -1.0f;
  }
  const auto x = random_batch<float>(input_shape(d), 5, -1, 1, 2);
  CHECK(qnet.predict(x) == fnet.predict(x));
}

TEST_CASE("stale caches are rejected") {
  const auto d = parse_descriptor(kMlp);
  auto net = Network<float>::build(d, BuildOptions{});
  const auto x = random_batch<float>(input_shape(d), 2, 0, 1, 1);
  const std::vector<int> labels{0, 1};
  const auto first = net.forward(x, labels, Mode::train);
  const auto second = net.forward(x, labels, Mode::train);
  CHECK_THROWS_AS(net.backward(first), Error);
  CHECK_NOTHROW(net.backward(second));
  const auto eval = net.forward(x, labels, Mode::eval);
  CHECK_THROWS_AS(net.backward(eval), Error);
  CHECK_THROWS_AS(net.forward(random_batch<float>({1, 1, 5}, 2, 0, 1, 1), labels, Mode::train), Error);
}

TEST_CASE("sgd_step by hand") {
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"one","input":[1,1,1],"layers":[{"id":"f","kind":"fc","out_channels":1}]})");
  auto net = Network<double>::build(d, BuildOptions{});
  net.parameters()[0].value[0] = 2.0;
  net.parameters()[1].value[0] = 0.0;
  Gradients<double> g;
  g.values = {TensorD({1, 1}, 0.5), TensorD({1}, 0.0)};
  const SgdConfig cfg{0.1, 0.9, 0.01};
  net.sgd_step(g, cfg);
  // v = 0.5 + 0.01*2 = 0.52; w = 2 - 0.052
  CHECK(net.parameters()[0].value[0] == doctest::Approx(1.948).epsilon(1e-15));
  net.sgd_step(g, cfg);
  // v = 0.9*0.52 + 0.5 + 0.01*1.948 = 0.98748; w = 1.948 - 0.098748
  CHECK(net.parameters()[0].value[0] == doctest::Approx(1.849252).epsilon(1e-14));

  Gradients<double> zero;
  zero.values = {TensorD({1, 1}, 0.0), TensorD({1}, 0.0)};
  auto fresh = Network<double>::build(d, BuildOptions{});
  const auto before = fresh.parameters()[0].value;
  fresh.sgd_step(zero, SgdConfig{0.1, 0.9, 0});
  CHECK(fresh.parameters()[0].value == before);
  fresh.sgd_step(g, SgdConfig{0.0, 0.9, 0});
  CHECK(fresh.parameters()[0].value == before);

  // quantized weights move lr * quantized_lr_scale
  BuildOptions q;
  q.policy = PrecisionPolicy::uniform({32, 2});
  auto qn = Network<double>::build(d, q);
  qn.parameters()[0].value[0] = 0.2;
  CHECK(qn.parameters()[0].quantized);
  CHECK_FALSE(qn.parameters()[1].quantized);
  qn.sgd_step(g, SgdConfig{0.1, 0.0, 0.0, 4.0});
  CHECK(qn.parameters()[0].value[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("packed execution matches the reference path per layer") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "desk_cnn.json");
  for (Precision p : std::vector<Precision>{{4, 4}, {4, 2}, {1, 1}, {8, 8}, {2, 4}}) {
    CAPTURE(p.bits_a);
    CAPTURE(p.bits_w);
    BuildOptions o;
    o.widen = 2;
    o.seed = 12;
    o.policy = PrecisionPolicy::uniform(p);
    const auto net = Network<float>::build(d, o);
    size_t packed = 0;
    for (size_t i = 0; i < net.nodes().size(); ++i) {
      if (!net.has_packed_path(i)) continue;
      ++packed;
      const auto x = random_batch<float>(net.nodes()[i].in_shape, 3, -0.3, 1.3, 100 + i);
      const Tensor ref = net.run_node(i, x, Exec::reference);
      const Tensor got = net.run_node(i, x, Exec::packed);
      REQUIRE(ref.shape() == got.shape());
      double peak = 0;
      for (float v : ref.values()) peak = std::max(peak, double(std::abs(v)));
      for (size_t j = 0; j < ref.size(); ++j) REQUIRE(std::abs(double(got[j]) - ref[j]) <= 1e-5 * peak);
    }
    CHECK(packed == 5);
    const auto x = random_batch<float>(input_shape(d), 4, 0, 1, 7);
    const Tensor a = net.predict(x, Exec::reference), b = net.predict(x, Exec::packed);
    double peak = 0;
    for (float v : a.values()) peak = std::max(peak, double(std::abs(v)));
    for (size_t j = 0; j < a.size(); ++j) CHECK(std::abs(double(a[j]) - b[j]) <= 1e-4 * peak);
  }
}

TEST_CASE("quantized forward equals conv2d_ref on dequantized tensors") {
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"two","input":[2,5,5],"layers":[
    {"id":"c1","kind":"conv","out_channels":3,"kernel":3,"padding":1},{"id":"r","kind":"relu"},
    {"id":"c2","kind":"conv","out_channels":2,"kernel":3,"stride":2},{"id":"f","kind":"fc","out_channels":2}]})");
  BuildOptions o;
  o.policy = PrecisionPolicy::uniform({4, 4});
  o.seed = 8;
  const auto net = Network<double>::build(d, o);
  const auto x = random_batch<double>({2, 5, 5}, 2, -0.2, 1.2, 4);
  const auto& n = net.nodes()[0];
  const TensorD y = net.run_node(0, x, Exec::reference);
  // oracle: clip+quantize the input, dequantize the weights, plain conv, + bias
  std::vector<double> xq(x.size()), wq(net.effective_weights(0).size());
  for (size_t i = 0; i < x.size(); ++i) xq[i] = oracle::wrpn_act(x[i], 4);
  for (size_t i = 0; i < wq.size(); ++i) wq[i] = oracle::wrpn_weight(net.parameters()[0].value[i], 4);
  const auto ref = oracle::conv2d(xq, wq, 2, 2, 5, 5, 3, 3, 3, 1, 1);
  REQUIRE(ref.size() == y.size());
  for (size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  CHECK(n.kind == NodeKind::qconv);
}

TEST_CASE("exempt first and last layers compute exactly as FP32") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "desk_cnn.json");
  BuildOptions fo, qo;
  fo.seed = qo.seed = 4;
  qo.policy = PrecisionPolicy::standard(d, {2, 2});
  auto fnet = Network<float>::build(d, fo);
  auto qnet = Network<float>::build(d, qo);
  const size_t first = 0, last = qnet.nodes().size() - 1;
  REQUIRE(qnet.nodes()[first].kind == NodeKind::conv_fp32);
  REQUIRE(qnet.nodes()[last].kind == NodeKind::fc_fp32);
  for (size_t i : {first, last}) {
    const auto& n = qnet.nodes()[i];
    fnet.parameters()[fnet.nodes()[i].weight].value = qnet.parameters()[n.weight].value;
    fnet.parameters()[fnet.nodes()[i].bias].value = qnet.parameters()[n.bias].value;
    const auto x = random_batch<float>(n.in_shape, 3, -1, 2, i);
    CHECK(qnet.run_node(i, x, Exec::reference) == fnet.run_node(i, x, Exec::reference));
  }
  CHECK(qnet.nodes()[3].kind == NodeKind::qconv);
}

TEST_CASE("full-precision forward equals a plain FP32 composition") {
  const auto d = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"one","input":[1,1,4],"layers":[
    {"id":"f1","kind":"fc","out_channels":3},{"id":"r","kind":"relu"},{"id":"f2","kind":"fc","out_channels":2}]})");
  const auto net = Network<float>::build(d, BuildOptions{});
  const auto x = random_batch<float>({1, 1, 4}, 2, -1, 1, 5);
  const auto& p = net.parameters();
  const Tensor y = net.predict(x);
  for (size_t b = 0; b < 2; ++b) {
    double h[3];
    for (int o = 0; o < 3; ++o) {
      double s = p[1].value[o];
      for (int i = 0; i < 4; ++i) s += double(p[0].value[o * 4 + i]) * x[b * 4 + i];
      h[o] = std::max(s, 0.0);
    }
    for (int o = 0; o < 2; ++o) {
      double s = p[3].value[o];
      for (int i = 0; i < 3; ++i) s += double(p[2].value[o * 3 + i]) * h[i];
      CHECK(y[b * 2 + o] == doctest::Approx(s).epsilon(1e-6));
    }
  }
}
