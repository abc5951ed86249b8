#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wrpn/quant.hpp"
#include "wrpn/tensor.hpp"

namespace wrpn {

// Tensor container:
//   "WRPT" | rank:u64 | extents:u64[rank] | values:f32[prod(extents)]
// Quantized container:
//   "WRPQ" | rank:u64 | extents:u64[rank] | family:u8 | kind:u8 | bits:u8 |
//   signed:u8 | scale:f32 | codes:(i8 or u8)[prod(extents)]
// Every multi-byte field is little-endian.
inline constexpr char kTensorMagic[4] = {'W', 'R', 'P', 'T'};
inline constexpr char kQuantizedMagic[4] = {'W', 'R', 'P', 'Q'};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

// Codes are stored one byte per element, so k is limited to 8 here and
// per-channel scales are not representable.
std::vector<std::uint8_t> encode_quantized(const QuantizedTensor& q);
QuantizedTensor decode_quantized(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }
inline void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }
inline QuantizedTensor load_quantized(const std::filesystem::path& path) { return decode_quantized(read_file(path)); }
inline void save_quantized(const std::filesystem::path& path, const QuantizedTensor& q) {
  write_file(path, encode_quantized(q));
}

}  // namespace wrpn
