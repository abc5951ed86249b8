#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wrpn/error.hpp"

namespace wrpn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Layouts are NCHW for feature maps and OIHW for
// convolution weights throughout the library.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Same data, new extents; the element count must be preserved.
  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;
  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Throws ErrorCode::numeric naming `op` when any element is NaN or infinite.
template <typename T>
void require_finite(const BasicTensor<T>& t, const char* op);

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t input_h = 1;
  std::size_t input_w = 1;

  std::size_t output_h() const;
  std::size_t output_w() const;
  void validate() const;
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
};

struct PoolGeometry {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;

  std::size_t output_extent(std::size_t input) const;
};

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Direct-summation convolution. For every output element the accumulator
// starts at zero and walks input channels in the outer loop and the kernel
// window (rows, then columns) in the inner loops. Padded taps are skipped.
template <typename T>
BasicTensor<T> conv2d_ref(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                          const ConvGeometry& geom);

// Row-major M×K times K×N; the k loop is innermost and ascending.
template <typename T>
BasicTensor<T> matmul_ref(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, const PoolGeometry& pool);

// Per-channel affine normalisation with stored statistics. `x` is N×C or
// N×C×H×W; the four parameter tensors have C elements each.
template <typename T>
BasicTensor<T> batchnorm_infer(const BasicTensor<T>& x, const BasicTensor<T>& mean,
                               const BasicTensor<T>& variance, const BasicTensor<T>& scale,
                               const BasicTensor<T>& shift, T epsilon = T(1e-5));

template <typename T>
struct XentResult {
  T loss = 0;                // mean over the batch
  BasicTensor<T> probs;      // softmax(logits), N×C
};

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const int> labels);

}  // namespace wrpn
