#pragma once

#include <random>

#include "sbp/layer.hpp"

namespace sbp {

// y = x W + b with W stored in x out.
template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(std::size_t in, std::size_t out);

  LayerKind kind() const override { return LayerKind::kDense; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::vector<ParamRef<T>> params() override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape& input) const override;

  void init_he(std::mt19937_64& rng);

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }
  const Tensor<T>& weight() const { return w_; }
  const Tensor<T>& bias() const { return b_; }

 private:
  std::size_t in_, out_;
  Tensor<T> w_, b_, gw_, gb_;
  Tensor<T> x_;
};

// Cross-correlation over NHWC input with weights [kh][kw][cin][cout].
template <typename T>
class Conv2dLayer final : public Layer<T> {
 public:
  struct Geometry {
    std::size_t in_channels = 1, out_channels = 1;
    std::size_t kernel_h = 1, kernel_w = 1;
    std::size_t stride = 1, padding = 0;
  };

  explicit Conv2dLayer(Geometry g);

  LayerKind kind() const override { return LayerKind::kConv2d; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::vector<ParamRef<T>> params() override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape& input) const override;

  void init_he(std::mt19937_64& rng);

  const Geometry& geometry() const { return g_; }
  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }
  const Tensor<T>& weight() const { return w_; }
  const Tensor<T>& bias() const { return b_; }

 private:
  Geometry g_;
  Tensor<T> w_, b_, gw_, gb_;
  Shape in_shape_;   // batch-inclusive shape of the cached input
  Tensor<T> cols_;   // im2col matrix of the cached input
};

template <typename T>
class MaxPool2dLayer final : public Layer<T> {
 public:
  MaxPool2dLayer(std::size_t kernel, std::size_t stride);

  LayerKind kind() const override { return LayerKind::kMaxPool2d; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape& input) const override;

  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }

 private:
  std::size_t kernel_, stride_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape& input) const override;

 private:
  Tensor<T> x_;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kFlatten; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape&) const override { return 0; }

 private:
  Shape in_shape_;
};

// Keeps a subset of the last axis, in the given order. Produced by
// compaction when pruned features have no upstream unit to delete.
template <typename T>
class SelectLayer final : public Layer<T> {
 public:
  SelectLayer(std::size_t in, std::vector<std::size_t> indices);

  LayerKind kind() const override { return LayerKind::kSelect; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape&) const override { return 0; }

  std::size_t in() const { return in_; }
  const std::vector<std::size_t>& indices() const { return idx_; }

 private:
  std::size_t in_;
  std::vector<std::size_t> idx_;
  Shape in_shape_;
};

}  // namespace sbp
