#include "sbp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "sbp/checkpoint.hpp"
#include "sbp/compact.hpp"
#include "sbp/errors.hpp"
#include "sbp/objective.hpp"

namespace sbp {

using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<float> rows_of(const Dataset& d, const std::vector<std::size_t>& order, std::size_t begin,
                      std::size_t end, std::vector<int>& labels) {
  Shape s = d.x.shape();
  s[0] = end - begin;
  Tensor<float> x(s);
  const std::size_t row = d.x.row_size();
  labels.clear();
  for (std::size_t i = begin; i < end; ++i) {
    std::copy_n(d.x.data() + order[i] * row, row, x.data() + (i - begin) * row);
    labels.push_back(d.y[order[i]]);
  }
  return x;
}

double quantile(const std::vector<double>& sorted, double q) {
  return sorted[static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1)))];
}

std::string snr_rows(std::size_t epoch, const Network<float>& net) {
  std::string out;
  const auto idx = net.sbp_indices();
  const auto layers = net.sbp_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const PruneReport r = layers[l]->prune_report();
    std::vector<double> s = r.snr;
    std::sort(s.begin(), s.end());
    out += std::to_string(epoch) + ",L" + std::to_string(idx[l]) + "," +
           std::to_string(s.size()) + "," + std::to_string(r.kept_count);
    for (double q : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) out += "," + fmt("%.6g", quantile(s, q));
    out += "\n";
  }
  return out;
}

}  // namespace

double evaluate_error(Network<float>& net, const Dataset& d, std::size_t batch) {
  if (d.size() == 0) return 0.0;
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t b = 0; b < d.size(); b += batch) {
    const std::size_t e = std::min(d.size(), b + batch);
    const Tensor<float> x = rows_of(d, order, b, e, labels);
    correct += softmax_xent(net.forward(x, Mode::kEval), labels).correct;
  }
  return 1.0 - static_cast<double>(correct) / static_cast<double>(d.size());
}

std::vector<LayerSparsity> layer_sparsity(const Network<float>& net) {
  std::vector<LayerSparsity> out;
  const auto idx = net.sbp_indices();
  const auto layers = net.sbp_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.push_back({idx[l], layers[l]->prune_report().kept_count, layers[l]->groups()});
  }
  return out;
}

SparsityReport sparsity_report(Network<float>& net, const Dataset& test) {
  SparsityReport r;
  r.layers = layer_sparsity(net);
  r.flops_before = count_flops(net);
  r.flops_after = r.flops_before;
  try {
    r.flops_after = count_flops(compact(net));
  } catch (const UnsupportedPatternError& e) {
    r.compaction_error = e.what();
  }
  if (r.flops_after > 0) {
    r.speedup = static_cast<double>(r.flops_before) / static_cast<double>(r.flops_after);
  } else {
    r.speedup = r.flops_before > 0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  r.test_error = evaluate_error(net, test);
  return r;
}

json report_to_json(const SparsityReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", "L" + std::to_string(l.layer)}, {"kept", l.kept}, {"total", l.total}});
  }
  json j = {{"layers", layers},
            {"flops_before", r.flops_before},
            {"flops_after", r.flops_after},
            {"speedup", std::isfinite(r.speedup) ? json(r.speedup) : json("inf")},
            {"test_error", r.test_error}};
  if (!r.compaction_error.empty()) j["compaction_error"] = r.compaction_error;
  return j;
}

std::string metrics_header(const std::vector<LayerSparsity>& layers) {
  std::string h = "epoch,train_nll,kl_total,elbo,test_error";
  for (const auto& l : layers) h += ",L" + std::to_string(l.layer) + ":kept/total";
  return h + "\n";
}

std::string metrics_row(const EpochMetrics& m) {
  std::string r = std::to_string(m.epoch) + "," + fmt("%.8f", m.train_nll) + "," +
                  fmt("%.6f", m.kl_total) + "," + fmt("%.6f", m.elbo) + "," +
                  fmt("%.6f", m.test_error);
  for (const auto& l : m.sparsity) r += "," + std::to_string(l.kept) + "/" + std::to_string(l.total);
  return r + "\n";
}

TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  TrainResult res{Network<float>(), {}, {}, load_data(cfg.dataset)};
  Dataset& tr = res.data.train;
  const std::size_t n = tr.size(), m = cfg.batch_size;
  if (m > n) {
    throw ConfigError("batch_size " + std::to_string(m) + " exceeds the training set size " +
                      std::to_string(n));
  }
  if (cfg.shuffle_labels) {
    // Separate stream so true- and shuffled-label runs share initialization.
    std::mt19937_64 label_rng(cfg.seed ^ 0x6c6162656c73ULL);
    std::shuffle(tr.y.begin(), tr.y.end(), label_rng);
  }

  std::mt19937_64 rng(cfg.seed);
  res.net = build_network(cfg, tr.example_shape(), tr.classes, rng);
  Network<float>& net = res.net;

  const bool write = !out_dir.empty();
  std::ofstream metrics, snr;
  const std::filesystem::path dir(out_dir);
  if (write) {
    std::filesystem::create_directories(dir);
    metrics.open(dir / "metrics.csv", std::ios::trunc);
    snr.open(dir / "snr_summary.csv", std::ios::trunc);
    if (!metrics || !snr) throw DataError("cannot write under " + out_dir);
    metrics << metrics_header(layer_sparsity(net));
    snr << "epoch,layer,groups,kept,min,q10,q25,median,q75,q90,max\n";
    save_checkpoint(net, (dir / "checkpoint.sbp").string());
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<int> labels;
  std::uint64_t step = 0;

  // Pretraining: SBP layers pinned near identity, plain likelihood plus
  // weight decay on the weight matrices.
  if (cfg.pretrain_epochs > 0) {
    for (auto* s : net.sbp_layers()) s->set_all(0.0, kLogSigmaMin);
    Adam<float> opt(cfg.optimizer);
    const float decay = static_cast<float>(static_cast<double>(n) * cfg.pretrain_weight_decay);
    for (std::size_t e = 0; e < cfg.pretrain_epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < n; b += m) {
        const Tensor<float> x = rows_of(tr, order, b, std::min(n, b + m), labels);
        const SgvbStep r = sgvb_gradient(net, x, labels, n, {}, cfg.seed, step++, false);
        if (!std::isfinite(r.value.loss)) throw NumericError("non-finite loss during pretraining");
        std::vector<ParamRef<float>> ps;
        for (auto& p : net.params()) {
          if (p.role == ParamRole::kSbpMu || p.role == ParamRole::kSbpLogSigma) continue;
          if (p.role == ParamRole::kWeight) {
            for (std::size_t i = 0; i < p.value->size(); ++i) (*p.grad)[i] += decay * (*p.value)[i];
          }
          ps.push_back(p);
        }
        opt.step(ps);
      }
    }
    for (auto* s : net.sbp_layers()) s->reset();
  }

  const std::vector<double> scales = kl_scales(net, cfg.kl_mode);
  Adam<float> opt(cfg.optimizer);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double nll_sum = 0.0;
    for (std::size_t b = 0; b < n; b += m) {
      const std::size_t e = std::min(n, b + m);
      const Tensor<float> x = rows_of(tr, order, b, e, labels);
      const SgvbStep r = sgvb_gradient(net, x, labels, n, scales, cfg.seed, step++, true);
      if (!std::isfinite(r.value.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step - 1));
      }
      nll_sum += r.parts.nll_minibatch * static_cast<double>(e - b);
      opt.step(net.params());
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.train_nll = nll_sum / static_cast<double>(n);
    const auto sbps = net.sbp_layers();
    for (std::size_t l = 0; l < sbps.size(); ++l) row.kl_total += scales[l] * sbps[l]->kl_sum();
    row.elbo = -(static_cast<double>(n) * row.train_nll + row.kl_total);
    if (!std::isfinite(row.elbo)) throw NumericError("non-finite ELBO at epoch " + std::to_string(epoch));
    row.sparsity = layer_sparsity(net);

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      row.test_error = evaluate_error(net, res.data.test);
      res.metrics.push_back(row);
      if (write) {
        metrics << metrics_row(row) << std::flush;
        snr << snr_rows(epoch, net) << std::flush;
      }
    }
    if (write) save_checkpoint(net, (dir / "checkpoint.sbp").string());
  }

  res.report = sparsity_report(net, res.data.test);
  if (write) {
    std::ofstream rep(dir / "sparsity_report.json", std::ios::trunc);
    rep << report_to_json(res.report).dump(2) << "\n";
  }
  return res;
}

}  // namespace sbp
