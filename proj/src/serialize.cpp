#include "wrpn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace wrpn {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    require(pos_ + n <= in_.size(), ErrorCode::parse, "container truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(v);
  }
  void magic(const char (&expected)[4]) {
    need(4);
    require(std::memcmp(in_.data() + pos_, expected, 4) == 0, ErrorCode::parse, "bad container magic");
    pos_ += 4;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_shape(Writer& w, const Shape& shape) {
  w.u64(shape.size());
  for (auto e : shape) w.u64(e);
}

Shape read_shape(Reader& r) {
  const auto rank = r.u64();
  require(rank >= 1 && rank <= 8, ErrorCode::parse, "unsupported rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    e = r.u64();
    require(e > 0 && e <= (std::uint64_t{1} << 40), ErrorCode::parse, "invalid extent in container");
    count *= e;
    require(count <= (std::uint64_t{1} << 40), ErrorCode::parse, "container element count too large");
  }
  return shape;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  Writer w;
  w.bytes(kTensorMagic, 4);
  write_shape(w, t.shape());
  for (float v : t.values()) w.f32(v);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kTensorMagic);
  Shape shape = read_shape(r);
  const std::size_t n = shape_size(shape);
  require(r.remaining() == n * 4, ErrorCode::parse, "tensor payload size does not match extents");
  std::vector<float> values(n);
  for (auto& v : values) v = r.f32();
  return Tensor(std::move(shape), std::move(values));
}

std::vector<std::uint8_t> encode_quantized(const QuantizedTensor& q) {
  require(q.spec.bits <= 8, ErrorCode::invalid_argument, "quantized container stores one byte per code (k <= 8)");
  require(q.channel_scales.empty(), ErrorCode::invalid_argument,
          "quantized container holds a single scale; per-channel scales are not serialisable");
  Writer w;
  w.bytes(kQuantizedMagic, 4);
  write_shape(w, q.shape);
  w.u8(static_cast<std::uint8_t>(q.spec.family));
  w.u8(static_cast<std::uint8_t>(q.spec.kind));
  w.u8(static_cast<std::uint8_t>(q.spec.bits));
  w.u8(q.is_signed() ? 1 : 0);
  w.f32(q.scale);
  for (auto c : q.codes) w.u8(static_cast<std::uint8_t>(c & 0xff));
  return w.take();
}

QuantizedTensor decode_quantized(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kQuantizedMagic);
  QuantizedTensor q;
  q.shape = read_shape(r);
  const auto family = r.u8();
  const auto kind = r.u8();
  q.spec.bits = r.u8();
  const bool is_signed = r.u8() != 0;
  require(family <= 2 && kind <= 1, ErrorCode::parse, "unknown family or kind tag");
  q.spec.family = static_cast<QuantFamily>(family);
  q.spec.kind = static_cast<OperandKind>(kind);
  require(q.spec.bits >= 1 && q.spec.bits <= 8, ErrorCode::parse, "bit width out of range");
  require(is_signed == q.is_signed(), ErrorCode::parse, "signedness flag disagrees with operand kind");
  q.scale = r.f32();
  const std::size_t n = shape_size(q.shape);
  require(r.remaining() == n, ErrorCode::parse, "code payload size does not match extents");
  q.codes.resize(n);
  for (auto& c : q.codes) {
    const auto b = r.u8();
    c = is_signed ? static_cast<std::int32_t>(static_cast<std::int8_t>(b)) : static_cast<std::int32_t>(b);
  }
  return q;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
}

}  // namespace wrpn
