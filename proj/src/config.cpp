#include "sbp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "sbp/errors.hpp"
#include "sbp/layers.hpp"

namespace sbp {

using nlohmann::json;

namespace {

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

json mlp_layers(const json& net, const Shape& input, std::size_t classes) {
  std::vector<std::size_t> hidden;
  read(net, "hidden", hidden);
  json layers = json::array();
  if (input.size() > 1) layers.push_back({{"kind", "flatten"}});
  std::size_t cur = shape_size(input);
  for (std::size_t h : hidden) {
    layers.push_back({{"kind", "sbp"}, {"pattern", "per_feature"}});
    layers.push_back({{"kind", "dense"}, {"in", cur}, {"out", h}});
    layers.push_back({{"kind", "relu"}});
    cur = h;
  }
  layers.push_back({{"kind", "sbp"}, {"pattern", "per_feature"}});
  layers.push_back({{"kind", "dense"}, {"in", cur}, {"out", classes}});
  return layers;
}

// LeNet5-Caffe with SBP after every convolution and the two consecutive
// layers (per channel, then per feature) before the first dense layer.
json lenet5_layers(const Shape& input, std::size_t classes) {
  if (input.size() != 3) throw ConfigError("lenet5_sbp needs [H,W,C] image input");
  return json::array({
      {{"kind", "conv2d"}, {"out_channels", 20}, {"kernel_h", 5}, {"kernel_w", 5}},
      {{"kind", "relu"}},
      {{"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}},
      {{"kind", "sbp"}, {"pattern", "per_channel"}},
      {{"kind", "conv2d"}, {"out_channels", 50}, {"kernel_h", 5}, {"kernel_w", 5}},
      {{"kind", "relu"}},
      {{"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}},
      {{"kind", "sbp"}, {"pattern", "per_channel"}},
      {{"kind", "flatten"}},
      {{"kind", "sbp"}, {"pattern", "per_feature"}},
      {{"kind", "dense"}, {"out", 500}},
      {{"kind", "relu"}},
      {{"kind", "sbp"}, {"pattern", "per_feature"}},
      {{"kind", "dense"}, {"out", classes}},
  });
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!std::isfinite(c.a) || !std::isfinite(c.b) || !(c.a < c.b)) {
    throw ConfigError("truncation needs a < b (got a=" + std::to_string(c.a) +
                      ", b=" + std::to_string(c.b) + ")");
  }
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.snr_threshold >= 0)) throw ConfigError("snr_threshold must be >= 0");
  if (c.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!(c.pretrain_weight_decay >= 0)) throw ConfigError("pretrain_weight_decay must be >= 0");
  const auto& d = c.dataset;
  if (d.kind != "mnist_idx" && d.kind != "synthetic_blobs" && d.kind != "synthetic_moons") {
    throw ConfigError("dataset.kind must be mnist_idx, synthetic_blobs or synthetic_moons");
  }
  if (d.kind == "mnist_idx" && d.dir.empty()) throw ConfigError("dataset.dir is required for mnist_idx");
  if (!(d.test_fraction > 0 && d.test_fraction < 1)) {
    throw ConfigError("dataset.test_fraction must be in (0, 1)");
  }
  if (!(d.noise >= 0)) throw ConfigError("dataset.noise must be >= 0");
  if (!c.network.is_object() || (!c.network.contains("template") && !c.network.contains("layers"))) {
    throw ConfigError("network needs either 'template' or 'layers'");
  }
  Adam<float> check(c.optimizer);  // throws on bad hyperparameters
  (void)check;
}

TrainConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"network", "dataset", "epochs", "batch_size", "seed", "optimizer", "truncation",
                  "snr_threshold", "kl_mode", "pretrain_epochs", "pretrain_weight_decay",
                  "shuffle_labels", "eval_every"},
                 "config");
  TrainConfig c;
  if (j.contains("network")) c.network = j.at("network");
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d,
                   {"kind", "dir", "train_limit", "test_limit", "per_class", "classes", "noise",
                    "seed", "test_fraction"},
                   "dataset");
    read(d, "kind", c.dataset.kind);
    read(d, "dir", c.dataset.dir);
    read(d, "train_limit", c.dataset.train_limit);
    read(d, "test_limit", c.dataset.test_limit);
    read(d, "per_class", c.dataset.per_class);
    read(d, "classes", c.dataset.classes);
    read(d, "noise", c.dataset.noise);
    read(d, "seed", c.dataset.seed);
    read(d, "test_fraction", c.dataset.test_fraction);
  }
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"lr", "sbp_lr", "beta1", "beta2", "eps"}, "optimizer");
    read(o, "lr", c.optimizer.lr);
    read(o, "sbp_lr", c.optimizer.sbp_lr);
    read(o, "beta1", c.optimizer.beta1);
    read(o, "beta2", c.optimizer.beta2);
    read(o, "eps", c.optimizer.eps);
  }
  if (j.contains("truncation")) {
    const json& t = j.at("truncation");
    reject_unknown(t, {"a", "b"}, "truncation");
    read(t, "a", c.a);
    read(t, "b", c.b);
  }
  read(j, "snr_threshold", c.snr_threshold);
  std::string mode = kl_mode_name(c.kl_mode);
  read(j, "kl_mode", mode);
  c.kl_mode = kl_mode_from_name(mode);
  read(j, "pretrain_epochs", c.pretrain_epochs);
  read(j, "pretrain_weight_decay", c.pretrain_weight_decay);
  read(j, "shuffle_labels", c.shuffle_labels);
  read(j, "eval_every", c.eval_every);
  validate(c);
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const TrainConfig& c) {
  const auto& d = c.dataset;
  return {{"network", c.network},
          {"dataset",
           {{"kind", d.kind},
            {"dir", d.dir},
            {"train_limit", d.train_limit},
            {"test_limit", d.test_limit},
            {"per_class", d.per_class},
            {"classes", d.classes},
            {"noise", d.noise},
            {"seed", d.seed},
            {"test_fraction", d.test_fraction}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"sbp_lr", c.optimizer.sbp_lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"truncation", {{"a", c.a}, {"b", c.b}}},
          {"snr_threshold", c.snr_threshold},
          {"kl_mode", kl_mode_name(c.kl_mode)},
          {"pretrain_epochs", c.pretrain_epochs},
          {"pretrain_weight_decay", c.pretrain_weight_decay},
          {"shuffle_labels", c.shuffle_labels},
          {"eval_every", c.eval_every}};
}

DataSplit load_data(const DatasetConfig& d) {
  DataSplit s;
  if (d.kind == "mnist_idx") {
    s.train = head(load_mnist_idx(d.dir + "/train-images-idx3-ubyte",
                                  d.dir + "/train-labels-idx1-ubyte"),
                   d.train_limit);
    s.test = head(load_mnist_idx(d.dir + "/t10k-images-idx3-ubyte",
                                 d.dir + "/t10k-labels-idx1-ubyte"),
                  d.test_limit);
    return s;
  }
  const Dataset all = d.kind == "synthetic_moons"
                          ? make_moons(d.per_class, d.noise, d.seed)
                          : make_blobs(d.per_class, d.classes, d.noise, d.seed);
  // Generators interleave classes, so a prefix split stays balanced.
  const auto n_test = static_cast<std::size_t>(std::llround(d.test_fraction * all.size()));
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < all.size(); ++i) (i < all.size() - n_test ? tr : te).push_back(i);
  s.train = gather(all, tr);
  s.test = gather(all, te);
  return s;
}

Network<float> build_network(const TrainConfig& c, const Shape& input, std::size_t classes,
                             std::mt19937_64& rng) {
  json layers;
  const json& net = c.network;
  if (net.contains("template")) {
    const std::string t = net.at("template").get<std::string>();
    if (t == "mlp_sbp") {
      reject_unknown(net, {"template", "hidden"}, "network");
      layers = mlp_layers(net, input, classes);
    } else if (t == "lenet5_sbp") {
      reject_unknown(net, {"template"}, "network");
      layers = lenet5_layers(input, classes);
    } else {
      throw ConfigError("unknown network template '" + t + "' (expected mlp_sbp or lenet5_sbp)");
    }
  } else {
    reject_unknown(net, {"layers"}, "network");
    layers = net.at("layers");
  }
  if (!layers.is_array()) throw ConfigError("network layers must be an array");

  Network<float> out(input);
  for (json l : layers) {
    const Shape cur = out.output_shape();
    const std::string kind = l.value("kind", std::string());
    if (kind == "sbp") {
      l["input_shape"] = cur;
      l["a"] = c.a;
      l["b"] = c.b;
      l["threshold"] = c.snr_threshold;
    } else if (kind == "dense" && !l.contains("in")) {
      if (cur.size() != 1) throw ConfigError("dense layer needs flat input, got " + shape_str(cur));
      l["in"] = cur[0];
    } else if (kind == "conv2d" && !l.contains("in_channels")) {
      if (cur.size() != 3) throw ConfigError("conv2d needs [H,W,C] input, got " + shape_str(cur));
      l["in_channels"] = cur[2];
    }
    try {
      out.add(layer_from_spec<float>(l, cur));
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("network does not compose: ") + e.what());
    }
  }
  if (out.output_shape() != Shape{classes}) {
    throw ConfigError("network output " + shape_str(out.output_shape()) + " does not match " +
                      std::to_string(classes) + " classes");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (auto* d = dynamic_cast<DenseLayer<float>*>(&out.layer(i))) d->init_he(rng);
    if (auto* cv = dynamic_cast<Conv2dLayer<float>*>(&out.layer(i))) cv->init_he(rng);
  }
  return out;
}

}  // namespace sbp
