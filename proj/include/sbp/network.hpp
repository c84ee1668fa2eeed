#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sbp/layer.hpp"
#include "sbp/sbp_layer.hpp"

namespace sbp {

// Ordered stack of layers over a fixed per-example input shape.
template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Checks that the layer accepts the current output shape.
  void add(std::unique_ptr<Layer<T>> layer);

  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;
  // Per-example input shape of every layer, plus the final output shape.
  std::vector<Shape> shapes() const;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  // Noise for training forwards is keyed by (seed, step, layer index).
  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::uint64_t seed = 0,
                    std::uint64_t step = 0);
  // Accumulates parameter gradients. The gradient w.r.t. the network input is
  // only computed (and returned) when input_grad is set.
  Tensor<T> backward(const Tensor<T>& grad_out, bool input_grad = false);

  // All parameters, named "L<index>.<name>".
  std::vector<ParamRef<T>> params();
  void zero_grad();

  std::vector<std::size_t> sbp_indices() const;
  std::vector<SbpLayer<T>*> sbp_layers();
  std::vector<const SbpLayer<T>*> sbp_layers() const;

  std::int64_t flops() const;

  // Layer hyperparameters; parameter values are not included.
  nlohmann::json spec() const;
  // Builds the architecture with zero-filled weights and initial SBP state.
  static Network from_spec(const nlohmann::json& spec);

  // Same architecture and parameters at another precision.
  template <typename U>
  Network<U> convert() const;

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
std::unique_ptr<Layer<T>> layer_from_spec(const nlohmann::json& spec, const Shape& input);

}  // namespace sbp
