#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sbp/checkpoint.hpp"
#include "sbp/cli.hpp"
#include "sbp/config.hpp"
#include "sbp/errors.hpp"
#include "sbp/train.hpp"

using namespace sbp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json blobs_config() {
  return {{"network", {{"template", "mlp_sbp"}, {"hidden", {16}}}},
          {"dataset", {{"kind", "synthetic_blobs"}, {"per_class", 60}, {"classes", 3}}},
          {"epochs", 3},
          {"batch_size", 20},
          {"seed", 5}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("sbp_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const json& j, const std::string& name = "cfg.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p.string();
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "sbp");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  }

  fs::path dir_;
};

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const TrainConfig c = parse_config(blobs_config());
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.a, -20.0);
  EXPECT_EQ(c.b, 0.0);
  EXPECT_EQ(c.snr_threshold, 1.0);
  EXPECT_EQ(c.kl_mode, KlMode::kPlain);
  const TrainConfig back = parse_config(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, RejectsBadInput) {
  auto j = blobs_config();
  j["epoch"] = 3;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = blobs_config();
  j["truncation"] = {{"a", 0}, {"b", -1}};
  EXPECT_THROW(validate(parse_config(j)), ConfigError);
  j = blobs_config();
  j["kl_mode"] = "loud";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = blobs_config();
  j["optimizer"] = {{"lr", -1}};
  EXPECT_THROW(validate(parse_config(j)), ConfigError);
  j = blobs_config();
  j["dataset"]["pixels"] = 3;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = blobs_config();
  j["epochs"] = "many";
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, BatchLargerThanDataset) {
  auto j = blobs_config();
  j["batch_size"] = 100000;
  EXPECT_THROW(train(parse_config(j), ""), ConfigError);
}

TEST(Config, LayerListInfersShapes) {
  auto j = blobs_config();
  j["network"] = {{"layers",
                   {{{"kind", "sbp"}},
                    {{"kind", "dense"}, {"out", 8}},
                    {{"kind", "relu"}},
                    {{"kind", "sbp"}},
                    {{"kind", "dense"}, {"out", 3}}}}};
  const TrainConfig c = parse_config(j);
  std::mt19937_64 rng(1);
  const auto net = build_network(c, {2}, 3, rng);
  EXPECT_EQ(net.output_shape(), (Shape{3}));
  EXPECT_EQ(net.sbp_indices().size(), 2u);
}

TEST(Config, LenetTemplateHasTwoSbpBeforeDense) {
  auto j = blobs_config();
  j["network"] = {{"template", "lenet5_sbp"}};
  std::mt19937_64 rng(1);
  const auto net = build_network(parse_config(j), {28, 28, 1}, 10, rng);
  const auto idx = net.sbp_indices();
  ASSERT_EQ(idx.size(), 4u);
  EXPECT_EQ(net.layer(idx[1] + 1).kind(), LayerKind::kFlatten);
  EXPECT_EQ(idx[2], idx[1] + 2);
}

TEST_F(Cli, TrainEvalPruneReport) {
  const auto cfg = write_config(blobs_config());
  const auto out = (dir_ / "out").string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out-dir", out, "--epochs", "2"}), kExitOk);
  for (const char* f : {"metrics.csv", "snr_summary.csv", "checkpoint.sbp", "sparsity_report.json",
                        "config_resolved.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  std::ifstream m(fs::path(out) / "metrics.csv");
  std::string header;
  std::getline(m, header);
  EXPECT_EQ(header.rfind("epoch,train_nll,kl_total,elbo,test_error,", 0), 0u) << header;
  const auto ck = (fs::path(out) / "checkpoint.sbp").string();
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", ck}), kExitOk);
  const auto pruned = (dir_ / "pruned").string();
  EXPECT_EQ(run({"prune", "--config", cfg, "--checkpoint", ck, "--out-dir", pruned}), kExitOk);
  EXPECT_TRUE(fs::exists(fs::path(pruned) / "compacted.sbp"));
  EXPECT_TRUE(fs::exists(fs::path(pruned) / "sparsity_report.json"));
  EXPECT_EQ(run({"report", "--checkpoint", ck}), kExitOk);
}

TEST_F(Cli, ReportOnUntrainedLenet300) {
  auto j = blobs_config();
  j["network"] = {{"template", "mlp_sbp"}, {"hidden", {500, 300}}};
  j["dataset"] = {{"kind", "mnist_idx"}, {"dir", "/nonexistent"}};
  const auto cfg = write_config(j);
  testing::internal::CaptureStdout();
  const int rc = run({"report", "--config", cfg});
  const std::string out = testing::internal::GetCapturedStdout();
  EXPECT_EQ(rc, kExitOk);
  // 2*(784*500 + 500*300 + 300*10) + 500 + 300 for the ReLUs.
  EXPECT_NE(out.find("\"flops_before\": 1090800"), std::string::npos) << out;
}

TEST_F(Cli, AllPrunedEvalIsMajorityRate) {
  const auto cfg = write_config(blobs_config());
  const auto out = (dir_ / "out").string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out-dir", out, "--epochs", "1"}), kExitOk);
  const auto ck = (fs::path(out) / "checkpoint.sbp").string();
  testing::internal::CaptureStdout();
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", ck, "--snr-threshold", "inf"}), kExitOk);
  const std::string text = testing::internal::GetCapturedStdout();
  const auto data = load_data(parse_config(blobs_config()).dataset);
  const double majority = majority_rate(data.test.y, data.test.classes);
  char want[64];
  std::snprintf(want, sizeof want, "accuracy %.6f", majority);
  EXPECT_NE(text.find(want), std::string::npos) << text << " want " << want;
}

TEST_F(Cli, ExitCodes) {
  const auto cfg = write_config(blobs_config());
  EXPECT_EQ(run({"train", "--config", cfg, "--bogus"}), kExitConfig);
  EXPECT_EQ(run({"train"}), kExitConfig);
  EXPECT_EQ(run({"train", "--config", (dir_ / "missing.json").string()}), kExitConfig);
  EXPECT_EQ(run({"train", "--config", cfg, "--kl-mode", "loud"}), kExitConfig);
  auto bad = blobs_config();
  bad["truncation"] = {{"a", 1}, {"b", 0}};
  EXPECT_EQ(run({"train", "--config", write_config(bad, "bad.json"), "--out-dir",
                 (dir_ / "o").string()}),
            kExitConfig);
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", (dir_ / "none.sbp").string()}), kExitData);
  std::ofstream(dir_ / "junk.sbp") << "not a checkpoint";
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", (dir_ / "junk.sbp").string()}), kExitData);
  auto mnist = blobs_config();
  mnist["dataset"] = {{"kind", "mnist_idx"}, {"dir", (dir_ / "nomnist").string()}};
  EXPECT_EQ(run({"train", "--config", write_config(mnist, "m.json"), "--out-dir",
                 (dir_ / "o2").string()}),
            kExitData);
  // Divergence: a huge learning rate blows the loss up.
  auto diverge = blobs_config();
  diverge["optimizer"] = {{"lr", 1e30}};
  diverge["epochs"] = 5;
  EXPECT_EQ(run({"train", "--config", write_config(diverge, "d.json"), "--out-dir",
                 (dir_ / "o3").string()}),
            kExitNumeric);
}

TEST_F(Cli, OverridesApply) {
  const auto cfg = write_config(blobs_config());
  const auto out = (dir_ / "out").string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out-dir", out, "--epochs", "0", "--seed", "9",
                 "--kl-mode", "scaled", "--snr-threshold", "2", "--shuffle-labels"}),
            kExitOk);
  json resolved;
  std::ifstream(fs::path(out) / "config_resolved.json") >> resolved;
  EXPECT_EQ(resolved["epochs"], 0);
  EXPECT_EQ(resolved["seed"], 9);
  EXPECT_EQ(resolved["kl_mode"], "scaled");
  EXPECT_EQ(resolved["snr_threshold"], 2.0);
  EXPECT_EQ(resolved["shuffle_labels"], true);
  // epochs = 0 leaves only the header in the metrics file.
  std::ifstream m(fs::path(out) / "metrics.csv");
  std::string line;
  int lines = 0;
  while (std::getline(m, line)) ++lines;
  EXPECT_EQ(lines, 1);
}
