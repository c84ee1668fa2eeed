#include "sbp/network.hpp"

#include "sbp/errors.hpp"
#include "sbp/layers.hpp"

namespace sbp {

using nlohmann::json;

template <typename T>
Network<T>::Network(const Network& other) : input_shape_(other.input_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Network<T>::add(std::unique_ptr<Layer<T>> layer) {
  layer->output_shape(output_shape());
  layers_.push_back(std::move(layer));
}

template <typename T>
Shape Network<T>::output_shape() const {
  Shape s = input_shape_;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename T>
std::vector<Shape> Network<T>::shapes() const {
  std::vector<Shape> out{input_shape_};
  for (const auto& l : layers_) out.push_back(l->output_shape(out.back()));
  return out;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, std::uint64_t seed,
                              std::uint64_t step) {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw ShapeError("network expects per-example shape " + shape_str(input_shape_) +
                     ", got batch " + shape_str(x.shape()));
  }
  ForwardContext ctx;
  ctx.mode = mode;
  ctx.noise.seed = seed;
  ctx.noise.step = step;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    ctx.noise.layer = i;
    h = layers_[i]->forward(h, ctx);
  }
  return h;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_out, bool input_grad) {
  // A layer's input gradient matters only if some earlier layer has
  // parameters (or the caller asked for the network input gradient).
  std::vector<bool> needed(layers_.size());
  bool upstream = input_grad;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    needed[i] = upstream;
    upstream = upstream || !layers_[i]->params().empty();
  }
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    layers_[i]->set_input_grad_needed(needed[i]);
    g = layers_[i]->backward(g);
    if (!needed[i]) break;  // nothing below has parameters
  }
  return g;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::params() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto p : layers_[i]->params()) {
      p.name = "L" + std::to_string(i) + "." + p.name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params()) p.grad->fill(T(0));
}

template <typename T>
std::vector<std::size_t> Network<T>::sbp_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->kind() == LayerKind::kSbp) out.push_back(i);
  }
  return out;
}

template <typename T>
std::vector<SbpLayer<T>*> Network<T>::sbp_layers() {
  std::vector<SbpLayer<T>*> out;
  for (auto i : sbp_indices()) out.push_back(static_cast<SbpLayer<T>*>(layers_[i].get()));
  return out;
}

template <typename T>
std::vector<const SbpLayer<T>*> Network<T>::sbp_layers() const {
  std::vector<const SbpLayer<T>*> out;
  for (auto i : sbp_indices()) {
    out.push_back(static_cast<const SbpLayer<T>*>(layers_[i].get()));
  }
  return out;
}

template <typename T>
std::int64_t Network<T>::flops() const {
  std::int64_t total = 0;
  Shape s = input_shape_;
  for (const auto& l : layers_) {
    total += l->flops(s);
    s = l->output_shape(s);
  }
  return total;
}

template <typename T>
json Network<T>::spec() const {
  json layers = json::array();
  for (const auto& l : layers_) layers.push_back(l->spec());
  return {{"input_shape", input_shape_}, {"layers", layers}};
}

template <typename T>
Network<T> Network<T>::from_spec(const json& spec) {
  try {
    Network<T> net(spec.at("input_shape").get<Shape>());
    for (const auto& l : spec.at("layers")) net.add(layer_from_spec<T>(l, net.output_shape()));
    return net;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed network spec: ") + e.what());
  }
}

template <typename T>
template <typename U>
Network<U> Network<T>::convert() const {
  Network<U> out = Network<U>::from_spec(spec());
  Network<T> self(*this);
  auto src = self.params();
  auto dst = out.params();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<U>();
  return out;
}

template <typename T>
std::unique_ptr<Layer<T>> layer_from_spec(const json& j, const Shape& input) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") {
      return std::make_unique<DenseLayer<T>>(j.at("in").get<std::size_t>(),
                                             j.at("out").get<std::size_t>());
    }
    if (kind == "conv2d") {
      typename Conv2dLayer<T>::Geometry g;
      g.in_channels = j.at("in_channels").get<std::size_t>();
      g.out_channels = j.at("out_channels").get<std::size_t>();
      g.kernel_h = j.at("kernel_h").get<std::size_t>();
      g.kernel_w = j.at("kernel_w").get<std::size_t>();
      g.stride = j.value("stride", std::size_t{1});
      g.padding = j.value("padding", std::size_t{0});
      return std::make_unique<Conv2dLayer<T>>(g);
    }
    if (kind == "maxpool") {
      const auto k = j.at("kernel").get<std::size_t>();
      return std::make_unique<MaxPool2dLayer<T>>(k, j.value("stride", k));
    }
    if (kind == "relu") return std::make_unique<ReluLayer<T>>();
    if (kind == "flatten") return std::make_unique<FlattenLayer<T>>();
    if (kind == "select") {
      return std::make_unique<SelectLayer<T>>(j.at("in").get<std::size_t>(),
                                              j.at("indices").get<std::vector<std::size_t>>());
    }
    if (kind == "sbp") {
      const Shape shape = j.value("input_shape", input);
      const auto pk = GroupPattern::kind_from_name(j.value("pattern", std::string("per_feature")));
      GroupPattern pattern;
      switch (pk) {
        case GroupPattern::Kind::kPerFeature: pattern = GroupPattern::per_feature(shape); break;
        case GroupPattern::Kind::kPerChannel: pattern = GroupPattern::per_channel(shape); break;
        case GroupPattern::Kind::kCustom:
          pattern = GroupPattern::custom(
              shape, j.at("group_map").get<std::vector<std::uint32_t>>());
          break;
      }
      return std::make_unique<SbpLayer<T>>(std::move(pattern), j.value("a", -20.0),
                                           j.value("b", 0.0), j.value("threshold", 1.0));
    }
    throw ConfigError("unknown layer kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed layer spec: ") + e.what());
  }
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::convert<double>() const;
template Network<float> Network<double>::convert<float>() const;
template Network<float> Network<float>::convert<float>() const;
template Network<double> Network<double>::convert<double>() const;
template std::unique_ptr<Layer<float>> layer_from_spec<float>(const json&, const Shape&);
template std::unique_ptr<Layer<double>> layer_from_spec<double>(const json&, const Shape&);

}  // namespace sbp
