#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbp/config.hpp"

namespace sbp {

struct LayerSparsity {
  std::size_t layer = 0;  // index in the masked network
  std::size_t kept = 0;
  std::size_t total = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double kl_total = 0.0;
  double elbo = 0.0;
  double test_error = 0.0;
  std::vector<LayerSparsity> sparsity;
};

struct SparsityReport {
  std::vector<LayerSparsity> layers;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;
  double speedup = 1.0;
  double test_error = 0.0;
  std::string compaction_error;  // set when the network cannot be compacted
};

// Classification error in evaluation mode.
double evaluate_error(Network<float>& net, const Dataset& d, std::size_t batch = 1000);
std::vector<LayerSparsity> layer_sparsity(const Network<float>& net);
// Compacts a copy of net to measure FLOPs after pruning.
SparsityReport sparsity_report(Network<float>& net, const Dataset& test);
nlohmann::json report_to_json(const SparsityReport& r);

std::string metrics_header(const std::vector<LayerSparsity>& layers);
std::string metrics_row(const EpochMetrics& m);

struct TrainResult {
  Network<float> net;
  std::vector<EpochMetrics> metrics;
  SparsityReport report;
  DataSplit data;  // after label shuffling, if any
};

// Full run: optional pretraining, SGVB training, per-epoch metrics and
// checkpoints under out_dir (metrics.csv, snr_summary.csv, checkpoint.sbp,
// sparsity_report.json). An empty out_dir writes nothing. On a non-finite
// loss the run stops with NumericError; the checkpoint from the last
// completed epoch stays on disk.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir);

}  // namespace sbp
