#include "wrpn/descriptor.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace wrpn {

using nlohmann::json;

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  static const std::map<std::string, LayerKind> kinds = {
      {"conv", LayerKind::conv},       {"fc", LayerKind::fc},           {"relu", LayerKind::relu},
      {"batchnorm", LayerKind::batchnorm}, {"bn", LayerKind::batchnorm}, {"maxpool", LayerKind::maxpool},
      {"avgpool", LayerKind::avgpool}, {"add", LayerKind::add},         {"concat", LayerKind::concat},
      {"softmax", LayerKind::softmax}};
  auto it = kinds.find(name);
  require(it != kinds.end(), ErrorCode::parse, "unknown layer kind '" + name + "'");
  return it->second;
}

std::size_t NetworkDescriptor::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].id == id) return i;
  fail(ErrorCode::invalid_argument, "descriptor '" + name + "' has no layer '" + id + "'");
}

const LayerDesc& NetworkDescriptor::layer(const std::string& id) const { return layers[index_of(id)]; }

bool NetworkDescriptor::has_layer(const std::string& id) const {
  for (const auto& l : layers)
    if (l.id == id) return true;
  return false;
}

namespace {

std::size_t window_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const std::string& id) {
  require(stride > 0, ErrorCode::parse, "layer '" + id + "': stride must be positive");
  require(in + 2 * pad >= k, ErrorCode::shape_mismatch, "layer '" + id + "': window larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

std::vector<ResolvedLayer> resolve(const NetworkDescriptor& desc) {
  require(desc.input.channels > 0 && desc.input.height > 0 && desc.input.width > 0, ErrorCode::parse,
          "descriptor '" + desc.name + "': input extents must be positive");
  require(!desc.layers.empty(), ErrorCode::parse, "descriptor '" + desc.name + "' has no layers");
  std::map<std::string, FeatureShape> produced{{"input", desc.input}};
  std::vector<ResolvedLayer> out;
  out.reserve(desc.layers.size());
  const std::string* previous = nullptr;
  static const std::string kInput = "input";

  for (const auto& l : desc.layers) {
    require(!l.id.empty() && l.id != "input", ErrorCode::parse, "layer ids must be non-empty and not 'input'");
    require(!produced.count(l.id), ErrorCode::parse, "duplicate layer id '" + l.id + "'");
    ResolvedLayer r;
    r.desc = &l;
    if (l.inputs.empty()) {
      r.inputs.push_back(produced.at(previous ? *previous : kInput));
    } else {
      for (const auto& src : l.inputs) {
        auto it = produced.find(src);
        require(it != produced.end(), ErrorCode::parse, "layer '" + l.id + "' reads unknown or later layer '" + src + "'");
        r.inputs.push_back(it->second);
      }
    }
    const FeatureShape& in = r.inputs.front();
    require(l.kind == LayerKind::add || l.kind == LayerKind::concat || r.inputs.size() == 1, ErrorCode::parse,
            "layer '" + l.id + "' of kind " + to_string(l.kind) + " takes exactly one input");

    switch (l.kind) {
      case LayerKind::conv: {
        require(l.out_channels > 0, ErrorCode::parse, "conv '" + l.id + "' needs out_channels");
        r.output = {l.out_channels, window_out(in.height, l.kernel_h, l.stride, l.padding, l.id),
                    window_out(in.width, l.kernel_w, l.stride, l.padding, l.id)};
        r.weights = std::uint64_t{l.out_channels} * in.channels * l.kernel_h * l.kernel_w;
        r.fma = r.output.elements() * in.channels * l.kernel_h * l.kernel_w;
        break;
      }
      case LayerKind::fc: {
        require(l.out_channels > 0, ErrorCode::parse, "fc '" + l.id + "' needs out_channels");
        r.output = {l.out_channels, 1, 1};
        r.weights = in.elements() * l.out_channels;
        r.fma = r.weights;
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        if (l.global) {
          r.output = {in.channels, 1, 1};
        } else {
          require(l.padding < l.kernel_h && l.padding < l.kernel_w, ErrorCode::parse,
                  "pool '" + l.id + "': padding must be smaller than the window");
          r.output = {in.channels, window_out(in.height, l.kernel_h, l.stride, l.padding, l.id),
                      window_out(in.width, l.kernel_w, l.stride, l.padding, l.id)};
        }
        break;
      }
      case LayerKind::add: {
        require(r.inputs.size() >= 2, ErrorCode::parse, "add '" + l.id + "' needs at least two inputs");
        for (const auto& s : r.inputs)
          require(s == in, ErrorCode::shape_mismatch, "add '" + l.id + "': operand shapes differ");
        r.output = in;
        break;
      }
      case LayerKind::concat: {
        require(r.inputs.size() >= 2, ErrorCode::parse, "concat '" + l.id + "' needs at least two inputs");
        r.output = {0, in.height, in.width};
        for (const auto& s : r.inputs) {
          require(s.height == in.height && s.width == in.width, ErrorCode::shape_mismatch,
                  "concat '" + l.id + "': spatial extents differ");
          r.output.channels += s.channels;
        }
        break;
      }
      case LayerKind::relu:
      case LayerKind::batchnorm:
      case LayerKind::softmax:
        r.output = in;
        break;
    }
    produced[l.id] = r.output;
    previous = &l.id;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> trainable_layers(const NetworkDescriptor& desc) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < desc.layers.size(); ++i)
    if (is_trainable(desc.layers[i].kind)) idx.push_back(i);
  return idx;
}

std::size_t classifier_outputs(const NetworkDescriptor& desc) {
  const auto t = trainable_layers(desc);
  require(!t.empty(), ErrorCode::parse, "descriptor '" + desc.name + "' has no conv/fc layer");
  return desc.layers[t.back()].out_channels;
}

namespace {

std::size_t get_extent(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<long long>();
  require(v >= 0, ErrorCode::parse, std::string("negative value for '") + key + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

NetworkDescriptor parse_descriptor(const std::string& json_text) {
  NetworkDescriptor d;
  try {
    const json j = json::parse(json_text);
    require(j.value("format", std::string{}) == kDescriptorFormat, ErrorCode::parse,
            std::string("descriptor must declare \"format\": \"") + kDescriptorFormat + "\"");
    d.name = j.at("name").get<std::string>();
    d.notes = j.value("notes", std::string{});
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    require(in.size() == 3, ErrorCode::parse, "input must be [C, H, W]");
    d.input = {in[0], in[1], in[2]};
    for (const auto& jl : j.at("layers")) {
      LayerDesc l;
      l.id = jl.at("id").get<std::string>();
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.out_channels = get_extent(jl, "out_channels", 0);
      if (jl.contains("kernel")) {
        const auto& k = jl.at("kernel");
        if (k.is_array()) {
          require(k.size() == 2, ErrorCode::parse, "kernel must be an integer or [h, w]");
          l.kernel_h = k[0].get<std::size_t>();
          l.kernel_w = k[1].get<std::size_t>();
        } else {
          l.kernel_h = l.kernel_w = k.get<std::size_t>();
        }
      }
      l.stride = get_extent(jl, "stride", 1);
      l.padding = get_extent(jl, "padding", 0);
      l.global = jl.value("global", false);
      l.exempt = jl.value("exempt", false);
      if (jl.contains("inputs")) l.inputs = jl.at("inputs").get<std::vector<std::string>>();
      d.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("descriptor JSON: ") + e.what());
  }
  resolve(d);
  return d;
}

NetworkDescriptor load_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open descriptor " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_descriptor(ss.str());
}

std::string descriptor_to_json(const NetworkDescriptor& d) {
  json j;
  j["format"] = kDescriptorFormat;
  j["name"] = d.name;
  if (!d.notes.empty()) j["notes"] = d.notes;
  j["input"] = {d.input.channels, d.input.height, d.input.width};
  json layers = json::array();
  for (const auto& l : d.layers) {
    json jl;
    jl["id"] = l.id;
    jl["kind"] = to_string(l.kind);
    if (is_trainable(l.kind)) jl["out_channels"] = l.out_channels;
    if (l.kind == LayerKind::conv || ((l.kind == LayerKind::maxpool || l.kind == LayerKind::avgpool) && !l.global)) {
      if (l.kernel_h == l.kernel_w)
        jl["kernel"] = l.kernel_h;
      else
        jl["kernel"] = {l.kernel_h, l.kernel_w};
      jl["stride"] = l.stride;
      jl["padding"] = l.padding;
    }
    if (l.global) jl["global"] = true;
    if (l.exempt) jl["exempt"] = true;
    if (!l.inputs.empty()) jl["inputs"] = l.inputs;
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

}  // namespace wrpn
