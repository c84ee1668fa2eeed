#include "sbp/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sbp/checkpoint.hpp"
#include "sbp/compact.hpp"
#include "sbp/config.hpp"
#include "sbp/errors.hpp"
#include "sbp/train.hpp"

namespace sbp {

using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string out_dir = "sbp_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::string> kl_mode;
  std::optional<double> snr_threshold;
  bool shuffle_labels = false;
};

TrainConfig resolve(const Options& o) {
  TrainConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.kl_mode) c.kl_mode = kl_mode_from_name(*o.kl_mode);
  if (o.snr_threshold) c.snr_threshold = *o.snr_threshold;
  if (o.shuffle_labels) c.shuffle_labels = true;
  validate(c);
  return c;
}

void apply_threshold(Network<float>& net, const Options& o) {
  if (!o.snr_threshold) return;
  for (auto* s : net.sbp_layers()) s->set_threshold(*o.snr_threshold);
}

// Per-example input shape and class count without reading the data.
std::pair<Shape, std::size_t> data_geometry(const DatasetConfig& d) {
  if (d.kind == "mnist_idx") return {{28, 28, 1}, 10};
  return {{2}, d.kind == "synthetic_moons" ? 2 : d.classes};
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

json flops_table(const Network<float>& net, std::ostream& os, const std::string& title) {
  os << title << "\n";
  json rows = json::array();
  const auto shapes = net.shapes();
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto f = net.layer(i).flops(shapes[i]);
    const std::string kind = layer_kind_name(net.layer(i).kind());
    os << "  " << pad("L" + std::to_string(i), 5) << pad(kind, 9)
       << pad(shape_str(shapes[i]) + " -> " + shape_str(shapes[i + 1]), 32) << f << "\n";
    rows.push_back({{"layer", "L" + std::to_string(i)},
                    {"kind", kind},
                    {"input_shape", shapes[i]},
                    {"output_shape", shapes[i + 1]},
                    {"flops", f}});
  }
  os << "  total " << count_flops(net) << "\n";
  return rows;
}

int cmd_train(const Options& o) {
  const TrainConfig cfg = resolve(o);
  std::filesystem::create_directories(o.out_dir);
  {
    std::ofstream f(std::filesystem::path(o.out_dir) / "config_resolved.json");
    f << config_to_json(cfg).dump(2) << "\n";
  }
  const TrainResult r = train(cfg, o.out_dir);
  for (const auto& m : r.metrics) std::cout << metrics_row(m);
  std::cout << "test_error " << r.report.test_error << "\nspeedup " << r.report.speedup << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const TrainConfig cfg = resolve(o);
  Network<float> net = load_checkpoint(o.checkpoint);
  apply_threshold(net, o);
  const DataSplit data = load_data(cfg.dataset);
  const double err = evaluate_error(net, data.test);
  std::printf("test_error %.6f\naccuracy %.6f\nexamples %zu\n", err, 1.0 - err, data.test.size());
  return kExitOk;
}

int cmd_prune(const Options& o) {
  const TrainConfig cfg = resolve(o);
  Network<float> net = load_checkpoint(o.checkpoint);
  apply_threshold(net, o);
  const DataSplit data = load_data(cfg.dataset);
  const SparsityReport rep = sparsity_report(net, data.test);
  if (!rep.compaction_error.empty()) throw UnsupportedPatternError(rep.compaction_error);
  Network<float> small = compact(net);
  const std::filesystem::path dir(o.out_dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(small, (dir / "compacted.sbp").string());
  json j = report_to_json(rep);
  j["compacted_test_error"] = evaluate_error(small, data.test);
  std::ofstream(dir / "sparsity_report.json") << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const Options& o) {
  Network<float> net;
  if (!o.checkpoint.empty()) {
    net = load_checkpoint(o.checkpoint);
    apply_threshold(net, o);
  } else if (!o.config.empty()) {
    const TrainConfig cfg = resolve(o);
    const auto [shape, classes] = data_geometry(cfg.dataset);
    std::mt19937_64 rng(cfg.seed);
    net = build_network(cfg, shape, classes, rng);
  } else {
    throw ConfigError("report needs --checkpoint or --config");
  }
  json j;
  j["before"] = flops_table(net, std::cout, "FLOPs (masked network)");
  j["flops_before"] = count_flops(net);
  try {
    const Network<float> small = compact(net);
    j["after"] = flops_table(small, std::cout, "FLOPs (compacted network)");
    j["flops_after"] = count_flops(small);
    const double after = static_cast<double>(count_flops(small));
    j["speedup"] = after > 0 ? static_cast<double>(count_flops(net)) / after : 0.0;
    std::cout << "speedup " << j["speedup"].get<double>() << "\n";
  } catch (const UnsupportedPatternError& e) {
    j["compaction_error"] = e.what();
    std::cout << "compaction unsupported: " << e.what() << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Structured Bayesian Pruning toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", o.config, "JSON config file");
    if (need_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override seed");
    sub->add_option("--epochs", o.epochs, "override epoch count");
    sub->add_option("--kl-mode", o.kl_mode, "plain or scaled")->check(CLI::IsMember({"plain", "scaled"}));
    sub->add_option("--snr-threshold", o.snr_threshold, "override pruning threshold");
    sub->add_flag("--shuffle-labels", o.shuffle_labels, "train on permuted labels");
    sub->add_option("--out-dir", o.out_dir, "directory for all artifacts");
  };
  auto* tr = app.add_subcommand("train", "train a network and write checkpoint + metrics");
  add_common(tr, true);
  auto* ev = app.add_subcommand("eval", "print test error of a checkpoint");
  add_common(ev, true);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  auto* pr = app.add_subcommand("prune", "compact a checkpoint and write a sparsity report");
  add_common(pr, true);
  pr->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  auto* rp = app.add_subcommand("report", "print the FLOPs table of a checkpoint or config");
  add_common(rp, false);
  rp->add_option("--checkpoint", o.checkpoint, "checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (pr->parsed()) return cmd_prune(o);
    return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedPatternError& e) {
    std::cerr << "unsupported pattern: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sbp
