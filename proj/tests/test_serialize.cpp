#include <filesystem>

#include "doctest.h"
#include "wrpn/serialize.hpp"

using namespace wrpn;

TEST_CASE("tensor container layout") {
  const Tensor t({2}, {1.0f, -2.0f});
  const auto bytes = encode_tensor(t);
  // magic, rank 1, extent 2, two floats
  REQUIRE(bytes.size() == 4 + 8 + 8 + 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "WRPT");
  CHECK(bytes[4] == 1);
  CHECK(bytes[12] == 2);
  // 1.0f = 0x3f800000 little-endian
  CHECK(bytes[20] == 0x00);
  CHECK(bytes[23] == 0x3f);
  CHECK(decode_tensor(bytes) == t);
}

TEST_CASE("round trips") {
  const Tensor t({2, 3, 1}, {0.5f, -1, 2, 3, 4.25f, -0.125f});
  CHECK(decode_tensor(encode_tensor(t)) == t);
  const auto q = quantize_weights_wrpn(Tensor({3}, {-1, 0.2f, 1}), 4);
  const auto back = decode_quantized(encode_quantized(q));
  CHECK(back.codes == q.codes);
  CHECK(back.scale == q.scale);
  CHECK(back.spec == q.spec);
  CHECK(back.shape == q.shape);
  const auto a = quantize_acts_wrpn(Tensor({2}, {1, 0.5f}), 8);
  CHECK(decode_quantized(encode_quantized(a)).codes == std::vector<int32_t>{255, 128});

  const auto path = std::filesystem::temp_directory_path() / "wrpn_roundtrip.tensor";
  save_tensor(path, t);
  CHECK(load_tensor(path) == t);
  std::filesystem::remove(path);
}

TEST_CASE("malformed containers") {
  auto bytes = encode_tensor(Tensor({2}, 1.0f));
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bytes), Error);
  bytes = encode_tensor(Tensor({2}, 1.0f));
  bytes.pop_back();
  CHECK_THROWS_AS(decode_tensor(bytes), Error);
  bytes = encode_tensor(Tensor({2}, 1.0f));
  bytes.push_back(0);
  CHECK_THROWS_AS(decode_tensor(bytes), Error);
  CHECK_THROWS_AS(decode_quantized(encode_tensor(Tensor({1}))), Error);
  CHECK_THROWS_AS(encode_quantized(quantize_acts_wrpn(Tensor({1}, 0.5f), 12)), Error);
  CHECK_THROWS_AS(load_tensor("/nonexistent/x.tensor"), Error);
}
