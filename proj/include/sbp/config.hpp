#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <json.hpp>

#include "sbp/adam.hpp"
#include "sbp/dataset.hpp"
#include "sbp/flops.hpp"
#include "sbp/network.hpp"

namespace sbp {

struct DatasetConfig {
  std::string kind = "synthetic_blobs";  // mnist_idx | synthetic_blobs | synthetic_moons
  // mnist_idx
  std::string dir;
  std::size_t train_limit = 0;  // 0 keeps everything
  std::size_t test_limit = 0;
  // synthetic
  std::size_t per_class = 200;
  std::size_t classes = 3;
  double noise = 0.5;
  std::uint64_t seed = 1;
  double test_fraction = 0.25;
};

struct TrainConfig {
  // Either {"template": "mlp_sbp", "hidden": [...]}, {"template": "lenet5_sbp"}
  // or {"layers": [...]} with SBP input shapes inferred.
  nlohmann::json network = {{"template", "mlp_sbp"}, {"hidden", {32}}};
  DatasetConfig dataset;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;
  AdamConfig optimizer;
  double a = -20.0;
  double b = 0.0;
  double snr_threshold = 1.0;
  KlMode kl_mode = KlMode::kPlain;
  std::size_t pretrain_epochs = 0;
  double pretrain_weight_decay = 5e-4;
  bool shuffle_labels = false;
  std::size_t eval_every = 1;
};

// Throws ConfigError naming the offending key.
TrainConfig parse_config(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);
nlohmann::json config_to_json(const TrainConfig& c);
// Checks that do not need the dataset.
void validate(const TrainConfig& c);

struct DataSplit {
  Dataset train;
  Dataset test;
};
DataSplit load_data(const DatasetConfig& d);

// Expands the network template for the given data and initializes weights.
Network<float> build_network(const TrainConfig& c, const Shape& input, std::size_t classes,
                             std::mt19937_64& rng);

}  // namespace sbp
