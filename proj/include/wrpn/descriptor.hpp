#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wrpn/error.hpp"

namespace wrpn {

enum class LayerKind { conv, fc, relu, batchnorm, maxpool, avgpool, add, concat, softmax };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);
inline bool is_trainable(LayerKind k) { return k == LayerKind::conv || k == LayerKind::fc; }

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  std::uint64_t elements() const { return std::uint64_t{channels} * height * width; }
  bool operator==(const FeatureShape&) const = default;
};

// One entry of the "layers" array. `inputs` names producer layers (or
// "input" for the image); an empty list means "the previous layer".
struct LayerDesc {
  std::string id;
  LayerKind kind = LayerKind::conv;
  std::size_t out_channels = 0;   // conv / fc only
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool global = false;            // avgpool over the whole plane
  bool exempt = false;            // pinned to FP32 by the standard policy
  std::vector<std::string> inputs;
};

inline constexpr const char* kDescriptorFormat = "wrpn-descriptor/1";

struct NetworkDescriptor {
  std::string name;
  FeatureShape input;
  std::vector<LayerDesc> layers;
  std::string notes;

  const LayerDesc& layer(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
  bool has_layer(const std::string& id) const;
};

// Per-layer facts derived by walking the graph in declaration order.
struct ResolvedLayer {
  const LayerDesc* desc = nullptr;
  std::vector<FeatureShape> inputs;
  FeatureShape output;
  std::uint64_t weights = 0;      // conv: Cout*Cin*kh*kw, fc: Cin*Cout
  std::uint64_t fma = 0;          // conv: Hout*Wout*Cout*Cin*kh*kw, fc: Cin*Cout
};

// Validates ids, references and shape composition; throws ErrorCode::parse
// or ErrorCode::shape_mismatch with the offending layer id.
std::vector<ResolvedLayer> resolve(const NetworkDescriptor& desc);

// Indices of conv/fc layers in declaration order.
std::vector<std::size_t> trainable_layers(const NetworkDescriptor& desc);
std::size_t classifier_outputs(const NetworkDescriptor& desc);

NetworkDescriptor parse_descriptor(const std::string& json_text);
NetworkDescriptor load_descriptor(const std::filesystem::path& path);
std::string descriptor_to_json(const NetworkDescriptor& desc);

}  // namespace wrpn
