#include "wrpn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace wrpn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) require(e > 0, ErrorCode::invalid_argument, "tensor extents must be positive, got " + shape_str(shape));
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  require(shape_size(shape_) == data_.size(), ErrorCode::shape_mismatch,
          "shape " + shape_str(shape_) + " needs " + std::to_string(shape_size(shape_)) + " values, got " +
              std::to_string(data_.size()));
}

template <typename T>
std::size_t BasicTensor<T>::extent(std::size_t axis) const {
  require(axis < shape_.size(), ErrorCode::invalid_argument, "axis out of range");
  return shape_[axis];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  require(shape_size(shape) == data_.size(), ErrorCode::shape_mismatch,
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* op) {
  if (!t.all_finite()) fail(ErrorCode::numeric, std::string(op) + ": non-finite value produced or consumed");
}

std::size_t ConvGeometry::output_h() const {
  return (input_h + 2 * padding - kernel_h) / stride + 1;
}

std::size_t ConvGeometry::output_w() const {
  return (input_w + 2 * padding - kernel_w) / stride + 1;
}

void ConvGeometry::validate() const {
  require(in_channels > 0 && out_channels > 0 && kernel_h > 0 && kernel_w > 0 && stride > 0 && input_h > 0 &&
              input_w > 0,
          ErrorCode::invalid_argument, "conv geometry extents must be positive");
  require(input_h + 2 * padding >= kernel_h && input_w + 2 * padding >= kernel_w, ErrorCode::invalid_argument,
          "conv kernel larger than padded input");
}

std::size_t PoolGeometry::output_extent(std::size_t input) const {
  require(window > 0 && stride > 0, ErrorCode::invalid_argument, "pool window and stride must be positive");
  require(input + 2 * padding >= window, ErrorCode::invalid_argument, "pool window larger than padded input");
  require(padding < window, ErrorCode::invalid_argument, "pool padding must be smaller than the window");
  return (input + 2 * padding - window) / stride + 1;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  require_finite(out, "add");
  return out;
}

template <typename T>
BasicTensor<T> conv2d_ref(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvGeometry& g) {
  g.validate();
  require(input.rank() == 4 && input.extent(1) == g.in_channels && input.extent(2) == g.input_h &&
              input.extent(3) == g.input_w,
          ErrorCode::shape_mismatch, "conv2d_ref: input " + shape_str(input.shape()) + " does not match geometry");
  require(weights.shape() == g.weight_shape(), ErrorCode::shape_mismatch,
          "conv2d_ref: weights " + shape_str(weights.shape()) + " expected " + shape_str(g.weight_shape()));

  const std::size_t batch = input.extent(0);
  const std::size_t oh = g.output_h(), ow = g.output_w();
  const std::size_t ih = g.input_h, iw = g.input_w;
  BasicTensor<T> out({batch, g.out_channels, oh, ow});
  const T* x = input.data();
  const T* w = weights.data();
  T* y = out.data();

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            const T* xc = x + (n * g.in_channels + ic) * ih * iw;
            const T* wc = w + (oc * g.in_channels + ic) * g.kernel_h * g.kernel_w;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(ih)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(iw)) continue;
                acc += xc[sy * iw + sx] * wc[ky * g.kernel_w + kx];
              }
            }
          }
          y[((n * g.out_channels + oc) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  require_finite(out, "conv2d_ref");
  return out;
}

template <typename T>
BasicTensor<T> matmul_ref(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorCode::shape_mismatch, "matmul_ref: operands must be rank 2");
  require(a.extent(1) == b.extent(0), ErrorCode::shape_mismatch,
          "matmul_ref: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  BasicTensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      out[i * n + j] = acc;
    }
  }
  require_finite(out, "matmul_ref");
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  require_finite(out, "relu");
  return out;
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, const PoolGeometry& pool) {
  require(x.rank() == 4, ErrorCode::shape_mismatch, "maxpool2d: expected NCHW input, got " + shape_str(x.shape()));
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t oh = pool.output_extent(h), ow = pool.output_extent(w);
  BasicTensor<T> out({n, c, oh, ow});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t ky = 0; ky < pool.window; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * pool.stride + ky) - static_cast<std::ptrdiff_t>(pool.padding);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < pool.window; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox * pool.stride + kx) - static_cast<std::ptrdiff_t>(pool.padding);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            best = std::max(best, src[sy * w + sx]);
          }
        }
        out[(plane * oh + oy) * ow + ox] = best;
      }
    }
  }
  require_finite(out, "maxpool2d");
  return out;
}

template <typename T>
BasicTensor<T> batchnorm_infer(const BasicTensor<T>& x, const BasicTensor<T>& mean, const BasicTensor<T>& variance,
                               const BasicTensor<T>& scale, const BasicTensor<T>& shift, T epsilon) {
  require(x.rank() == 2 || x.rank() == 4, ErrorCode::shape_mismatch,
          "batchnorm_infer: expected N×C or N×C×H×W, got " + shape_str(x.shape()));
  const std::size_t c = x.extent(1);
  for (const auto* p : {&mean, &variance, &scale, &shift})
    require(p->size() == c, ErrorCode::shape_mismatch, "batchnorm_infer: parameter tensors need one value per channel");
  const std::size_t n = x.extent(0);
  const std::size_t spatial = x.size() / (n * c);
  BasicTensor<T> out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T denom = variance[ch] + epsilon;
    require(denom > T(0), ErrorCode::domain, "batchnorm_infer: variance + epsilon must be positive");
    const T inv = T(1) / std::sqrt(denom);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * spatial;
      for (std::size_t s = 0; s < spatial; ++s)
        out[base + s] = (x[base + s] - mean[ch]) * inv * scale[ch] + shift[ch];
    }
  }
  require_finite(out, "batchnorm_infer");
  return out;
}

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const int> labels) {
  require(logits.rank() == 2, ErrorCode::shape_mismatch, "softmax_xent: logits must be N×C");
  const std::size_t n = logits.extent(0), c = logits.extent(1);
  require(labels.size() == n, ErrorCode::shape_mismatch, "softmax_xent: one label per row required");
  require_finite(logits, "softmax_xent");
  XentResult<T> r;
  r.probs = BasicTensor<T>({n, c});
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c, ErrorCode::invalid_argument,
            "softmax_xent: label out of range");
    const T* row = logits.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const T log_sum = std::log(sum);
    for (std::size_t j = 0; j < c; ++j) r.probs[i * c + j] = std::exp(row[j] - mx - log_sum);
    total += log_sum - (row[labels[i]] - mx);
  }
  r.loss = total / static_cast<T>(n);
  return r;
}

#define WRPN_INSTANTIATE(T)                                                                                      \
  template class BasicTensor<T>;                                                                                \
  template void require_finite<T>(const BasicTensor<T>&, const char*);                                          \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> conv2d_ref<T>(const BasicTensor<T>&, const BasicTensor<T>&, const ConvGeometry&);     \
  template BasicTensor<T> matmul_ref<T>(const BasicTensor<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> maxpool2d<T>(const BasicTensor<T>&, const PoolGeometry&);                             \
  template BasicTensor<T> batchnorm_infer<T>(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                             const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                             const BasicTensor<T>&, T);                                         \
  template XentResult<T> softmax_xent<T>(const BasicTensor<T>&, std::span<const int>);

WRPN_INSTANTIATE(float)
WRPN_INSTANTIATE(double)

#undef WRPN_INSTANTIATE

}  // namespace wrpn
