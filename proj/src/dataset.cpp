#include "wrpn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wrpn/error.hpp"
#include "wrpn/serialize.hpp"

namespace wrpn {

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t e = sample_elements();
  Tensor out({indices.size(), channels, height, width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < size(), ErrorCode::invalid_argument, "dataset index out of range");
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * e), e, out.data() + i * e);
  }
  return out;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  require(size() > 0, ErrorCode::invalid_argument, "dataset is empty");
  require(images.size() == size() * sample_elements(), ErrorCode::shape_mismatch, "dataset image buffer size");
  require(classes > 0, ErrorCode::invalid_argument, "dataset has no classes");
  for (int l : labels)
    require(l >= 0 && static_cast<std::size_t>(l) < classes, ErrorCode::invalid_argument, "dataset label out of range");
}

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  require(at + 4 <= b.size(), ErrorCode::parse, "IDX header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  require(be32(ib, 0) == 0x00000803, ErrorCode::parse, images.string() + ": not an IDX image file");
  require(be32(lb, 0) == 0x00000801, ErrorCode::parse, labels.string() + ": not an IDX label file");
  std::size_t n = be32(ib, 4);
  const std::size_t h = be32(ib, 8), w = be32(ib, 12);
  require(be32(lb, 4) == n, ErrorCode::parse, "IDX image and label counts differ");
  require(h > 0 && w > 0, ErrorCode::parse, "IDX images have zero extent");
  require(ib.size() >= 16 + n * h * w && lb.size() >= 8 + n, ErrorCode::parse, "IDX payload truncated");
  if (limit > 0) n = std::min(n, limit);

  Dataset d;
  d.height = h;
  d.width = w;
  d.images.resize(n * h * w);
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = static_cast<float>(ib[16 + i]) / 255.0f;
  d.labels.resize(n);
  int top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lb[8 + i];
    top = std::max(top, d.labels[i]);
  }
  d.classes = static_cast<std::size_t>(top) + 1;
  d.validate();
  return d;
}

Dataset make_blobs(std::size_t count, std::size_t dims, double margin, std::uint64_t seed,
                   std::uint64_t sample_seed) {
  require(count > 0 && dims > 0, ErrorCode::invalid_argument, "make_blobs: count and dims must be positive");
  std::mt19937_64 drng(seed), rng(sample_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(dims);
  double norm = 0;
  for (auto& v : dir) {
    v = normal(drng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;

  Dataset d;
  d.width = dims;
  d.classes = 2;
  d.images.resize(count * dims);
  d.labels.resize(count);
  std::vector<double> x(dims);
  for (std::size_t i = 0; i < count; ++i) {
    double proj = 0;
    for (std::size_t j = 0; j < dims; ++j) {
      x[j] = normal(rng);
      proj += x[j] * dir[j];
    }
    const int label = proj >= 0 ? 1 : 0;
    const double push = (label ? margin : -margin);
    for (std::size_t j = 0; j < dims; ++j) d.images[i * dims + j] = static_cast<float>((x[j] + push * dir[j]) * 0.25);
    d.labels[i] = label;
  }
  return d;
}

Dataset make_patterns(const PatternOptions& o) {
  require(o.count > 0, ErrorCode::invalid_argument, "make_patterns: count must be positive");
  constexpr std::size_t S = 12, classes = 10;

  // Templates: random strokes on a 12×12 canvas, fixed by `seed`.
  std::mt19937_64 trng(o.seed);
  std::vector<std::vector<float>> glyphs(classes, std::vector<float>(S * S, 0.0f));
  std::uniform_int_distribution<int> pos(2, 9), len(3, 7), dir(0, 3);
  for (auto& g : glyphs) {
    for (int stroke = 0; stroke < 4; ++stroke) {
      int r = pos(trng), c = pos(trng);
      const int dr[] = {0, 1, 1, 1}, dc[] = {1, 0, 1, -1};
      const int d = dir(trng), l = len(trng);
      for (int s = 0; s < l; ++s) {
        if (r >= 1 && r < int(S) - 1 && c >= 1 && c < int(S) - 1) g[r * S + c] = 1.0f;
        r += dr[d];
        c += dc[d];
      }
    }
  }

  std::mt19937_64 rng(o.sample_seed);
  std::uniform_int_distribution<int> cls(0, classes - 1), shift(-1, 1);
  std::uniform_real_distribution<double> contrast(0.6, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.noise);

  Dataset d;
  d.height = S;
  d.width = S;
  d.classes = classes;
  d.images.resize(o.count * S * S);
  d.labels.resize(o.count);
  for (std::size_t i = 0; i < o.count; ++i) {
    const int label = cls(rng);
    const int sr = shift(rng), sc = shift(rng);
    const double k = contrast(rng);
    float* img = d.images.data() + i * S * S;
    for (int r = 0; r < int(S); ++r)
      for (int c = 0; c < int(S); ++c) {
        const int r0 = r - sr, c0 = c - sc;
        double v = (r0 >= 0 && r0 < int(S) && c0 >= 0 && c0 < int(S)) ? glyphs[label][r0 * S + c0] * k : 0.0;
        if (unit(rng) < o.flip_fraction) v = 1.0 - v;
        v += noise(rng);
        img[r * S + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    d.labels[i] = label;
  }
  return d;
}

Dataset load_dataset(const std::string& full_spec, std::uint64_t sample_seed) {
  std::string spec = full_spec;
  if (const auto at = spec.rfind('@'); at != std::string::npos && spec.find(',') == std::string::npos) {
    try {
      sample_seed = std::stoull(spec.substr(at + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "bad seed in dataset spec '" + full_spec + "'");
    }
    spec.resize(at);
  }
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::size_t count = 0;
  if (colon != std::string::npos) {
    try {
      count = std::stoul(spec.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "bad sample count in dataset spec '" + spec + "'");
    }
  }
  if (name == "blobs") return make_blobs(count ? count : 1000, 16, 0.5, 11, sample_seed);
  if (name == "patterns") {
    PatternOptions o;
    o.count = count ? count : 4000;
    o.sample_seed = sample_seed;
    return make_patterns(o);
  }
  const auto comma = spec.find(',');
  require(comma != std::string::npos, ErrorCode::invalid_argument,
          "dataset must be 'blobs', 'patterns' or '<images.idx>,<labels.idx>'");
  return load_idx(spec.substr(0, comma), spec.substr(comma + 1));
}

}  // namespace wrpn
