#include "sbp/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "sbp/errors.hpp"

namespace sbp {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

void expect_shape(const Shape& got, const Shape& want, const char* layer) {
  if (got.size() != want.size() + 1 ||
      !std::equal(want.begin(), want.end(), got.begin() + 1)) {
    throw ShapeError(std::string(layer) + " expects per-example shape " +
                     shape_str(want) + ", got batch shape " + shape_str(got));
  }
}

Shape batch_shape(std::size_t m, const Shape& per_example) {
  Shape s{m};
  s.insert(s.end(), per_example.begin(), per_example.end());
  return s;
}

Shape per_example(const Shape& batch) { return Shape(batch.begin() + 1, batch.end()); }

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride,
                     std::size_t pad) {
  if (in + 2 * pad < k) {
    throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void he_normal(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max<std::size_t>(fan_in, 1)));
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

}  // namespace

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2d: return "maxpool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kSelect: return "select";
    case LayerKind::kSbp: return "sbp";
  }
  return "unknown";
}

// ---- dense ---------------------------------------------------------------

template <typename T>
DenseLayer<T>::DenseLayer(std::size_t in, std::size_t out)
    : in_(in), out_(out), w_({in, out}), b_({out}), gw_({in, out}), gb_({out}) {}

template <typename T>
Shape DenseLayer<T>::output_shape(const Shape& input) const {
  if (input != Shape{in_}) {
    throw ShapeError("dense layer expects input [" + std::to_string(in_) +
                     "], got " + shape_str(input));
  }
  return {out_};
}

template <typename T>
Tensor<T> DenseLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  expect_shape(x.shape(), {in_}, "dense");
  const std::size_t m = x.dim(0);
  Tensor<T> y({m, out_});
  auto ym = as_matrix(y, m, out_);
  ym.noalias() = as_matrix(x, m, in_) * as_matrix(w_, in_, out_);
  ym.rowwise() += as_matrix(b_, 1, out_).row(0);
  x_ = x;
  return y;
}

template <typename T>
Tensor<T> DenseLayer<T>::backward(const Tensor<T>& grad_y) {
  expect_shape(grad_y.shape(), {out_}, "dense backward");
  const std::size_t m = grad_y.dim(0);
  if (x_.empty() && m * in_ != 0) throw StateError("dense backward before forward");
  auto gy = as_matrix(grad_y, m, out_);
  as_matrix(gw_, in_, out_).noalias() += as_matrix(x_, m, in_).transpose() * gy;
  as_matrix(gb_, 1, out_).row(0) += gy.colwise().sum();
  if (!this->input_grad_needed_) return {};
  Tensor<T> gx({m, in_});
  as_matrix(gx, m, in_).noalias() = gy * as_matrix(w_, in_, out_).transpose();
  return gx;
}

template <typename T>
std::vector<ParamRef<T>> DenseLayer<T>::params() {
  return {{"weight", &w_, &gw_, ParamRole::kWeight},
          {"bias", &b_, &gb_, ParamRole::kBias}};
}

template <typename T>
std::unique_ptr<Layer<T>> DenseLayer<T>::clone() const {
  return std::make_unique<DenseLayer<T>>(*this);
}

template <typename T>
nlohmann::json DenseLayer<T>::spec() const {
  return {{"kind", "dense"}, {"in", in_}, {"out", out_}};
}

template <typename T>
std::int64_t DenseLayer<T>::flops(const Shape&) const {
  return 2 * static_cast<std::int64_t>(in_) * static_cast<std::int64_t>(out_);
}

template <typename T>
void DenseLayer<T>::init_he(std::mt19937_64& rng) {
  he_normal(w_, in_, rng);
  b_.fill(T(0));
}

// ---- conv2d --------------------------------------------------------------

template <typename T>
Conv2dLayer<T>::Conv2dLayer(Geometry g)
    : g_(g),
      w_({g.kernel_h, g.kernel_w, g.in_channels, g.out_channels}),
      b_({g.out_channels}),
      gw_({g.kernel_h, g.kernel_w, g.in_channels, g.out_channels}),
      gb_({g.out_channels}) {
  if (g.stride == 0 || g.kernel_h == 0 || g.kernel_w == 0) {
    throw ShapeError("conv2d needs positive kernel and stride");
  }
}

template <typename T>
Shape Conv2dLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != g_.in_channels) {
    throw ShapeError("conv2d expects [H,W," + std::to_string(g_.in_channels) +
                     "], got " + shape_str(input));
  }
  return {conv_out(input[0], g_.kernel_h, g_.stride, g_.padding),
          conv_out(input[1], g_.kernel_w, g_.stride, g_.padding), g_.out_channels};
}

template <typename T>
Tensor<T> Conv2dLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() != 4) throw ShapeError("conv2d expects NHWC input, got " + shape_str(x.shape()));
  const Shape out = output_shape(per_example(x.shape()));
  const std::size_t m = x.dim(0), h = x.dim(1), w = x.dim(2), cin = g_.in_channels;
  const std::size_t ho = out[0], wo = out[1], cout = g_.out_channels;
  const std::size_t patch = g_.kernel_h * g_.kernel_w * cin;
  const std::size_t rows = m * ho * wo;

  cols_ = Tensor<T>({rows, patch});
  T* col = cols_.data();
  for (std::size_t n = 0; n < m; ++n) {
    const T* img = x.data() + n * h * w * cin;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        for (std::size_t i = 0; i < g_.kernel_h; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g_.stride + i) -
                                    static_cast<std::ptrdiff_t>(g_.padding);
          for (std::size_t j = 0; j < g_.kernel_w; ++j, col += cin) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g_.stride + j) -
                                      static_cast<std::ptrdiff_t>(g_.padding);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(h) ||
                iw >= static_cast<std::ptrdiff_t>(w)) {
              std::fill(col, col + cin, T(0));
            } else {
              const T* src = img + (static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)) * cin;
              std::copy(src, src + cin, col);
            }
          }
        }
      }
    }
  }
  Tensor<T> y({m, ho, wo, cout});
  auto ym = as_matrix(y, rows, cout);
  ym.noalias() = as_matrix(cols_, rows, patch) * as_matrix(w_, patch, cout);
  ym.rowwise() += as_matrix(b_, 1, cout).row(0);
  in_shape_ = x.shape();
  return y;
}

template <typename T>
Tensor<T> Conv2dLayer<T>::backward(const Tensor<T>& grad_y) {
  if (in_shape_.empty()) throw StateError("conv2d backward before forward");
  const std::size_t m = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
  const std::size_t cin = g_.in_channels, cout = g_.out_channels;
  const Shape out = output_shape(per_example(in_shape_));
  expect_shape(grad_y.shape(), out, "conv2d backward");
  const std::size_t ho = out[0], wo = out[1];
  const std::size_t patch = g_.kernel_h * g_.kernel_w * cin;
  const std::size_t rows = m * ho * wo;

  auto gy = as_matrix(grad_y, rows, cout);
  as_matrix(gw_, patch, cout).noalias() += as_matrix(cols_, rows, patch).transpose() * gy;
  as_matrix(gb_, 1, cout).row(0) += gy.colwise().sum();
  if (!this->input_grad_needed_) return {};
  Tensor<T> gcols({rows, patch});
  as_matrix(gcols, rows, patch).noalias() = gy * as_matrix(w_, patch, cout).transpose();

  Tensor<T> gx(in_shape_);
  const T* col = gcols.data();
  for (std::size_t n = 0; n < m; ++n) {
    T* img = gx.data() + n * h * w * cin;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        for (std::size_t i = 0; i < g_.kernel_h; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g_.stride + i) -
                                    static_cast<std::ptrdiff_t>(g_.padding);
          for (std::size_t j = 0; j < g_.kernel_w; ++j, col += cin) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g_.stride + j) -
                                      static_cast<std::ptrdiff_t>(g_.padding);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(h) ||
                iw >= static_cast<std::ptrdiff_t>(w)) {
              continue;
            }
            T* dst = img + (static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += col[c];
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
std::vector<ParamRef<T>> Conv2dLayer<T>::params() {
  return {{"weight", &w_, &gw_, ParamRole::kWeight},
          {"bias", &b_, &gb_, ParamRole::kBias}};
}

template <typename T>
std::unique_ptr<Layer<T>> Conv2dLayer<T>::clone() const {
  return std::make_unique<Conv2dLayer<T>>(*this);
}

template <typename T>
nlohmann::json Conv2dLayer<T>::spec() const {
  return {{"kind", "conv2d"},         {"in_channels", g_.in_channels},
          {"out_channels", g_.out_channels}, {"kernel_h", g_.kernel_h},
          {"kernel_w", g_.kernel_w},   {"stride", g_.stride},
          {"padding", g_.padding}};
}

template <typename T>
std::int64_t Conv2dLayer<T>::flops(const Shape& input) const {
  const Shape out = output_shape(input);
  return 2 * static_cast<std::int64_t>(out[0] * out[1] * g_.in_channels *
                                       g_.out_channels * g_.kernel_h * g_.kernel_w);
}

template <typename T>
void Conv2dLayer<T>::init_he(std::mt19937_64& rng) {
  he_normal(w_, g_.kernel_h * g_.kernel_w * g_.in_channels, rng);
  b_.fill(T(0));
}

// ---- maxpool -------------------------------------------------------------

template <typename T>
MaxPool2dLayer<T>::MaxPool2dLayer(std::size_t kernel, std::size_t stride)
    : kernel_(kernel), stride_(stride) {
  if (kernel == 0 || stride == 0) throw ShapeError("maxpool needs positive kernel and stride");
}

template <typename T>
Shape MaxPool2dLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 3) throw ShapeError("maxpool expects [H,W,C], got " + shape_str(input));
  return {conv_out(input[0], kernel_, stride_, 0), conv_out(input[1], kernel_, stride_, 0),
          input[2]};
}

template <typename T>
Tensor<T> MaxPool2dLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() != 4) throw ShapeError("maxpool expects NHWC input, got " + shape_str(x.shape()));
  const Shape out = output_shape(per_example(x.shape()));
  const std::size_t m = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = out[0], wo = out[1];
  Tensor<T> y({m, ho, wo, c});
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t n = 0; n < m; ++n) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t arg = 0;
          for (std::size_t i = 0; i < kernel_; ++i) {
            for (std::size_t j = 0; j < kernel_; ++j) {
              const std::size_t idx =
                  ((n * h + oh * stride_ + i) * w + ow * stride_ + j) * c + ch;
              if (x[idx] > best || (i == 0 && j == 0)) {
                best = x[idx];
                arg = idx;
              }
            }
          }
          y[o] = best;
          argmax_[o] = arg;
        }
      }
    }
  }
  in_shape_ = x.shape();
  return y;
}

template <typename T>
Tensor<T> MaxPool2dLayer<T>::backward(const Tensor<T>& grad_y) {
  if (in_shape_.empty()) throw StateError("maxpool backward before forward");
  if (grad_y.size() != argmax_.size()) throw ShapeError("maxpool backward: gradient size mismatch");
  Tensor<T> gx(in_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) gx[argmax_[o]] += grad_y[o];
  return gx;
}

template <typename T>
std::unique_ptr<Layer<T>> MaxPool2dLayer<T>::clone() const {
  return std::make_unique<MaxPool2dLayer<T>>(*this);
}

template <typename T>
nlohmann::json MaxPool2dLayer<T>::spec() const {
  return {{"kind", "maxpool"}, {"kernel", kernel_}, {"stride", stride_}};
}

template <typename T>
std::int64_t MaxPool2dLayer<T>::flops(const Shape& input) const {
  return static_cast<std::int64_t>(shape_size(output_shape(input)));
}

// ---- relu ----------------------------------------------------------------

template <typename T>
Tensor<T> ReluLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  x_ = x;
  return y;
}

template <typename T>
Tensor<T> ReluLayer<T>::backward(const Tensor<T>& grad_y) {
  if (grad_y.shape() != x_.shape()) throw StateError("relu backward without matching forward");
  Tensor<T> gx(grad_y.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = x_[i] > T(0) ? grad_y[i] : T(0);
  return gx;
}

template <typename T>
std::unique_ptr<Layer<T>> ReluLayer<T>::clone() const {
  return std::make_unique<ReluLayer<T>>(*this);
}

template <typename T>
nlohmann::json ReluLayer<T>::spec() const {
  return {{"kind", "relu"}};
}

template <typename T>
std::int64_t ReluLayer<T>::flops(const Shape& input) const {
  return static_cast<std::int64_t>(shape_size(input));
}

// ---- flatten -------------------------------------------------------------

template <typename T>
Shape FlattenLayer<T>::output_shape(const Shape& input) const {
  return {shape_size(input)};
}

template <typename T>
Tensor<T> FlattenLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() < 1) throw ShapeError("flatten needs a batch axis");
  in_shape_ = x.shape();
  Tensor<T> y = x;
  y.reshape({x.dim(0), x.row_size()});
  return y;
}

template <typename T>
Tensor<T> FlattenLayer<T>::backward(const Tensor<T>& grad_y) {
  if (in_shape_.empty()) throw StateError("flatten backward before forward");
  Tensor<T> gx = grad_y;
  gx.reshape(in_shape_);
  return gx;
}

template <typename T>
std::unique_ptr<Layer<T>> FlattenLayer<T>::clone() const {
  return std::make_unique<FlattenLayer<T>>(*this);
}

template <typename T>
nlohmann::json FlattenLayer<T>::spec() const {
  return {{"kind", "flatten"}};
}

// ---- select --------------------------------------------------------------

template <typename T>
SelectLayer<T>::SelectLayer(std::size_t in, std::vector<std::size_t> indices)
    : in_(in), idx_(std::move(indices)) {
  for (auto i : idx_) {
    if (i >= in_) throw ShapeError("select index " + std::to_string(i) + " out of range");
  }
}

template <typename T>
Shape SelectLayer<T>::output_shape(const Shape& input) const {
  if (input.empty() || input.back() != in_) {
    throw ShapeError("select expects last axis " + std::to_string(in_) + ", got " +
                     shape_str(input));
  }
  Shape out = input;
  out.back() = idx_.size();
  return out;
}

template <typename T>
Tensor<T> SelectLayer<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  const Shape out = output_shape(per_example(x.shape()));
  Tensor<T> y(batch_shape(x.dim(0), out));
  const std::size_t rows = in_ == 0 ? 0 : x.size() / in_;
  const std::size_t k = idx_.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) y[r * k + j] = x[r * in_ + idx_[j]];
  }
  in_shape_ = x.shape();
  return y;
}

template <typename T>
Tensor<T> SelectLayer<T>::backward(const Tensor<T>& grad_y) {
  if (in_shape_.empty()) throw StateError("select backward before forward");
  Tensor<T> gx(in_shape_);
  const std::size_t k = idx_.size();
  const std::size_t rows = k == 0 ? 0 : grad_y.size() / k;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) gx[r * in_ + idx_[j]] += grad_y[r * k + j];
  }
  return gx;
}

template <typename T>
std::unique_ptr<Layer<T>> SelectLayer<T>::clone() const {
  return std::make_unique<SelectLayer<T>>(*this);
}

template <typename T>
nlohmann::json SelectLayer<T>::spec() const {
  return {{"kind", "select"}, {"in", in_}, {"indices", idx_}};
}

template class DenseLayer<float>;
template class DenseLayer<double>;
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class MaxPool2dLayer<float>;
template class MaxPool2dLayer<double>;
template class ReluLayer<float>;
template class ReluLayer<double>;
template class FlattenLayer<float>;
template class FlattenLayer<double>;
template class SelectLayer<float>;
template class SelectLayer<double>;

}  // namespace sbp
