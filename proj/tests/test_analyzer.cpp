#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "wrpn/analyzer.hpp"
#include "wrpn/repro.hpp"

using namespace wrpn;

namespace {

// conv 1->2 3x3 pad 1 on 4x4, relu, fc 32->3
const char* kToy = R"({"format":"wrpn-descriptor/1","name":"toy","input":[1,4,4],"layers":[
  {"id":"c1","kind":"conv","out_channels":2,"kernel":3,"padding":1},
  {"id":"r1","kind":"relu"},
  {"id":"f","kind":"fc","out_channels":3}]})";

const char* kStack = R"({"format":"wrpn-descriptor/1","name":"stack","input":[3,8,8],"layers":[
  {"id":"a","kind":"conv","out_channels":64,"kernel":3,"padding":1},
  {"id":"b","kind":"conv","out_channels":128,"kernel":3,"padding":1},
  {"id":"c","kind":"fc","out_channels":10}]})";

}  // namespace

TEST_CASE("fma counts") {
  const auto d = parse_descriptor(kToy);
  const auto r = resolve(d);
  CHECK(r[0].fma == 4 * 4 * 2 * 1 * 9);
  CHECK(r[1].fma == 0);
  CHECK(r[2].fma == 32 * 3);
  CHECK(total_fma(d) == 288 + 96);

  const auto one = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[1,1,1],"layers":[{"id":"c","kind":"conv","out_channels":1,"kernel":1}]})");
  CHECK(total_fma(one) == 1);
  const auto fc = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[512,1,1],"layers":[{"id":"f","kind":"fc","out_channels":1000}]})");
  CHECK(total_fma(fc) == 512000);
}

TEST_CASE("alexnet conv1 by hand") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "alexnet.json");
  const auto r = resolve(d);
  // conv0: 224 -> (224-12)/4+1 = 54; conv1 keeps 54x54 with 5x5 pad 2
  const auto& c1 = r[d.index_of("conv1")];
  CHECK(c1.output == FeatureShape{256, 54, 54});
  CHECK(c1.fma == uint64_t{54} * 54 * 256 * 96 * 25);
}

TEST_CASE("widening") {
  const auto d = parse_descriptor(kStack);
  const auto w = widen_descriptor(d, 2);
  CHECK(w.layers[0].out_channels == 128);
  CHECK(w.layers[1].out_channels == 256);
  CHECK(w.layers[2].out_channels == 10);
  CHECK(w.input.channels == 3);
  CHECK(descriptor_to_json(widen_descriptor(d, 1)) == descriptor_to_json(d));
  CHECK_THROWS_AS(widen_descriptor(d, 0.5), Error);
  // hidden conv: both sides widened -> f^2
  const auto r0 = resolve(d), r1 = resolve(w);
  CHECK(r1[1].fma == 4 * r0[1].fma);
  CHECK(r1[0].fma == 2 * r0[0].fma);
  CHECK(r1[2].fma == 2 * r0[2].fma);
  CHECK(widen_descriptor(d, 1.3).layers[0].out_channels == 83);
}

TEST_CASE("alexnet 2x growth per layer") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "alexnet.json");
  const auto base = resolve(d), wide = resolve(widen_descriptor(d, 2));
  const auto idx = trainable_layers(d);
  for (size_t i = 0; i < idx.size(); ++i) {
    const double g = double(wide[idx[i]].fma) / double(base[idx[i]].fma);
    CHECK(g == ((i == 0 || i + 1 == idx.size()) ? 2.0 : 4.0));
  }
  const double ratio = double(total_fma(widen_descriptor(d, 2))) / double(total_fma(d));
  CHECK(ratio >= 3.7);
  CHECK(ratio <= 4.0);
}

TEST_CASE("cost model") {
  for (const char* name : {"alexnet", "resnet34", "resnet50", "inception_bn", "desk_cnn"}) {
    CAPTURE(name);
    const auto d = load_descriptor(test::data_dir() / "descriptors" / (std::string(name) + ".json"));
    CHECK(cost_ratio(d, 1, {32, 32}, CostModel::uniform) == 1.0);
    const auto rep = compute_cost(d, PrecisionPolicy::uniform({4, 2}));
    uint64_t sum = 0, fma = 0;
    for (const auto& l : rep.layers) sum += l.bit_cost, fma += l.fma;
    CHECK(sum == rep.total_bit_cost);
    CHECK(fma == rep.total_fma);
    for (double f : {1.0, 1.5, 2.0, 3.0}) {
      const double ops = double(total_fma(widen_descriptor(d, f))) / double(total_fma(d));
      for (Precision p : standard_precision_grid()) {
        const double uni = cost_ratio(d, f, p, CostModel::uniform);
        CHECK(uni == doctest::Approx(ops * (p.bits_a + p.bits_w) / 64.0).epsilon(1e-12));
        CHECK(cost_ratio(d, f, p, CostModel::exempt_first_last) >= uni - 1e-12);
      }
    }
  }
}

TEST_CASE("alexnet table cells") {
  const auto d = load_descriptor(test::data_dir() / "descriptors" / "alexnet.json");
  CHECK(std::round(cost_ratio(d, 2, {4, 4}, CostModel::uniform) * 10) / 10 == doctest::Approx(0.5));
  CHECK(std::round(cost_ratio(d, 2, {32, 8}, CostModel::uniform) * 10) / 10 == doctest::Approx(2.4));
}

TEST_CASE("precision policy") {
  const auto d = parse_descriptor(kStack);
  const auto p = PrecisionPolicy::standard(d, {4, 2});
  CHECK(p.for_layer("a").full());
  CHECK(p.for_layer("b") == Precision{4, 2});
  CHECK(p.for_layer("c").full());
  auto bad = PrecisionPolicy::uniform({3, 3});
  CHECK_THROWS_AS(bad.validate(d), Error);
  auto unknown = PrecisionPolicy::uniform({4, 4});
  unknown.exempt.insert("nope");
  CHECK_THROWS_AS(unknown.validate(d), Error);
  CHECK(parse_precision_grid("4:2,1:1") == std::vector<Precision>{{4, 2}, {1, 1}});
  CHECK(standard_precision_grid().size() == 25);
  CHECK_THROWS_AS(parse_precision_grid("4-2"), Error);
}

TEST_CASE("footprint of the 3-layer toy net by hand") {
  const auto d = parse_descriptor(kToy);
  // batch 4, 4-byte elements. ACT: input 16 + conv 32 + relu 32 + fc 3 = 83 per sample.
  const auto t = memory_footprint(d, 4, Phase::training);
  CHECK(t.act_bytes == 83 * 4 * 4);
  CHECK(t.weight_bytes == (18 + 96) * 4);
  CHECK(t.max_dz_bytes == 32 * 4 * 4);
  CHECK(t.max_dx_bytes == 32 * 4 * 4);
  CHECK(t.total_bytes == 1328 + 456 + 512 + 512);
  const auto i = memory_footprint(d, 4, Phase::inference);
  CHECK(i.total_bytes == 512 + 512 + 456);
  CHECK(i.activation_fraction == doctest::Approx(1.0 - 456.0 / 1480.0));
  CHECK(t.total_bytes >= i.total_bytes);

  const auto fc = parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[5,1,1],"layers":[{"id":"f","kind":"fc","out_channels":7}]})");
  CHECK(memory_footprint(fc, 1, Phase::inference).total_bytes == (5 + 7 + 35) * 4);
  FootprintOptions half;
  half.bytes_per_act = 0.5;
  half.bytes_per_weight = 0.25;
  CHECK(memory_footprint(fc, 1, Phase::inference, half).total_bytes == 3 + 4 + 9);
  CHECK_THROWS_AS(memory_footprint(fc, 0, Phase::training), Error);
}

TEST_CASE("activation fraction rises with batch size") {
  for (const char* name : {"alexnet", "alexnet_caffe", "resnet34", "resnet50", "inception_bn", "desk_cnn", "desk_mlp"}) {
    CAPTURE(name);
    const auto d = load_descriptor(test::data_dir() / "descriptors" / (std::string(name) + ".json"));
    for (Phase ph : {Phase::training, Phase::inference}) {
      double prev = 0;
      for (size_t b : {1, 2, 8, 32, 128, 256, 1024}) {
        const double f = memory_footprint(d, b, ph).activation_fraction;
        CHECK(f > prev);
        CHECK(f < 1.0);
        prev = f;
      }
    }
  }
  const auto r50 = load_descriptor(test::data_dir() / "descriptors" / "resnet50.json");
  CHECK(memory_footprint(r50, 128, Phase::training).activation_fraction >= 0.95);
}

TEST_CASE("first-order efficiency") {
  CHECK(first_order_efficiency(4, 4) == 8.0);
  CHECK(first_order_efficiency(1, 1) == 32.0);
  CHECK(first_order_efficiency(32, 32) == 1.0);
  CHECK_THROWS_AS(first_order_efficiency(3, 4), Error);
}

TEST_CASE("reference tables reproduce") {
  const auto rep = run_repro(test::data_dir());
  CHECK(rep.cells.size() >= 39);
  for (const auto& c : rep.cells) {
    CAPTURE(c.table);
    CAPTURE(c.bits_a);
    CAPTURE(c.bits_w);
    CHECK(c.pass);
  }
  CHECK(repro_csv(rep).rfind("table,network,widen,bits_a,bits_w,reference,computed,rounded,delta,tolerance,pass\n", 0) == 0);
}

TEST_CASE("descriptor parse errors") {
  CHECK_THROWS_AS(parse_descriptor("{"), Error);
  CHECK_THROWS_AS(parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[1,2,2],"layers":[{"id":"c","kind":"conv","out_channels":1,"kernel":3}]})"), Error);
  CHECK_THROWS_AS(parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[1,2,2],"layers":[{"id":"a","kind":"relu"},{"id":"a","kind":"relu"}]})"), Error);
  CHECK_THROWS_AS(parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[1,2,2],"layers":[{"id":"a","kind":"relu","inputs":["zz"]}]})"), Error);
  CHECK_THROWS_AS(parse_descriptor(R"({"format":"wrpn-descriptor/1","name":"x","input":[1,2,2],"layers":[{"id":"a","kind":"warp"}]})"), Error);
  const auto d = parse_descriptor(kStack);
  CHECK(descriptor_to_json(parse_descriptor(descriptor_to_json(d))) == descriptor_to_json(d));
}
