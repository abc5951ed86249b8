#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wrpn/tensor.hpp"

namespace wrpn {

// Labelled samples stored contiguously, each sample C×H×W.
struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t classes = 0;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_elements() const { return channels * height * width; }
  // Gathers the listed samples into an N×C×H×W batch.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  void validate() const;
};

// MNIST-style IDX pair: images (magic 0x00000803, N×H×W u8) and labels
// (magic 0x00000801, N u8). Pixels are scaled to [0, 1]. `limit` > 0 keeps
// only the first `limit` samples.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0);

// Two classes in `dims` dimensions split by a random hyperplane; every point
// lies at least `margin` from it, so the set is linearly separable. `seed`
// fixes the hyperplane, `sample_seed` the points.
Dataset make_blobs(std::size_t count, std::size_t dims, double margin, std::uint64_t seed,
                   std::uint64_t sample_seed);

// Ten 12×12 glyph classes. Each sample is its class template shifted by up
// to one pixel, with random contrast, additive noise and a few flipped
// pixels. The same `seed` always yields the same templates; `sample_seed`
// draws the samples, so train and eval splits share classes.
struct PatternOptions {
  std::size_t count = 1000;
  double noise = 0.25;
  double flip_fraction = 0.04;
  std::uint64_t seed = 7;
  std::uint64_t sample_seed = 1;
};
Dataset make_patterns(const PatternOptions& options);

// Loads "blobs", "patterns" or an IDX pair given as "<images>,<labels>".
// The synthetic names accept ":count" and "@sample_seed" suffixes, e.g.
// "patterns:4000@2"; without "@" the `sample_seed` argument is used.
Dataset load_dataset(const std::string& spec, std::uint64_t sample_seed);

}  // namespace wrpn
