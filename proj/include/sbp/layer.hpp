#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbp/rng.hpp"
#include "sbp/tensor.hpp"

namespace sbp {

enum class LayerKind { kDense, kConv2d, kMaxPool2d, kRelu, kFlatten, kSelect, kSbp };

std::string layer_kind_name(LayerKind k);

enum class Mode { kTrain, kEval };

enum class ParamRole { kWeight, kBias, kSbpMu, kSbpLogSigma };

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  ParamRole role = ParamRole::kWeight;
};

struct ForwardContext {
  Mode mode = Mode::kEval;
  NoiseKey noise;  // noise.layer is filled in by the network
};

// Shapes passed to layers are per-example; tensors carry a leading batch axis.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) = 0;
  // Returns the input gradient and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_y) = 0;
  virtual std::vector<ParamRef<T>> params() { return {}; }
  virtual std::unique_ptr<Layer<T>> clone() const = 0;
  // Hyperparameters only; parameter arrays travel separately.
  virtual nlohmann::json spec() const = 0;
  virtual std::int64_t flops(const Shape& input) const = 0;

  // When false, backward may skip the input gradient and return an empty
  // tensor (the network does this for its first layer).
  void set_input_grad_needed(bool v) { input_grad_needed_ = v; }
  bool input_grad_needed() const { return input_grad_needed_; }

 protected:
  bool input_grad_needed_ = true;
};

}  // namespace sbp
