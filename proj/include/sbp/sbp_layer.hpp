#pragma once

#include <string>
#include <vector>

#include "sbp/group_pattern.hpp"
#include "sbp/layer.hpp"
#include "sbp/truncmath.hpp"

namespace sbp {

// Box the variational parameters are clamped to after every optimizer step.
inline constexpr double kMuMin = -20.0;
inline constexpr double kMuMax = 5.0;
inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 3.0;

inline constexpr double kInitMu = 0.0;
inline constexpr double kInitSigma = 0.1;

struct PruneReport {
  std::vector<double> snr;
  std::vector<bool> kept;
  std::size_t kept_count = 0;
  std::vector<std::string> group_labels;  // empty unless assigned
};

// Multiplicative truncated log-normal noise shared within groups:
// y[m, f] = x[m, f] * theta[m, group(f)].
template <typename T>
class SbpLayer final : public Layer<T> {
 public:
  explicit SbpLayer(GroupPattern pattern, double a = -20.0, double b = 0.0,
                    double threshold = 1.0);

  LayerKind kind() const override { return LayerKind::kSbp; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override;
  // Data-term gradients only; KL gradients come from kl_grads().
  Tensor<T> backward(const Tensor<T>& grad_y) override;
  std::vector<ParamRef<T>> params() override;
  std::unique_ptr<Layer<T>> clone() const override;
  nlohmann::json spec() const override;
  std::int64_t flops(const Shape&) const override { return 0; }

  const GroupPattern& pattern() const { return pattern_; }
  std::size_t groups() const { return pattern_.groups(); }
  double a() const { return a_; }
  double b() const { return b_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t);

  Tensor<T>& mu() { return mu_; }
  Tensor<T>& log_sigma() { return log_sigma_; }
  const Tensor<T>& mu() const { return mu_; }
  const Tensor<T>& log_sigma() const { return log_sigma_; }
  truncmath::TruncParams group_params(std::size_t g) const;

  // Resets every group to the initial (mu, sigma).
  void reset();
  // Sets every group to the same (mu, log sigma), e.g. the near-deterministic
  // state used while pretraining.
  void set_all(double mu, double log_sigma);
  void clamp();

  double kl_sum() const;
  // dKL/dmu and dKL/dlog_sigma per group.
  void kl_grads(std::vector<double>& d_mu, std::vector<double>& d_log_sigma) const;

  PruneReport prune_report() const;
  // Per-group multiplier used in evaluation: E[theta] if kept, else 0.
  std::vector<double> eval_scales() const;

  // Sampled theta of the last training forward, M x G.
  std::vector<double> last_noise() const;

 private:
  Tensor<T> apply_scales(const Tensor<T>& x, const double* scales, std::size_t stride) const;
  void draw(std::size_t object, std::size_t group);

  GroupPattern pattern_;
  double a_, b_, threshold_;
  Tensor<T> mu_, log_sigma_, g_mu_, g_log_sigma_;

  // Training cache.
  Tensor<T> x_;
  std::vector<double> u_, theta_;
  std::vector<truncmath::TruncLogNormalSampler> samplers_;
  std::vector<truncmath::TruncLogNormalSampler::Draw> draws_;
  // Draws are skipped while an object's whole group is zero (they cannot
  // affect the output) and made on demand later. The noise is counter-based,
  // so a late draw equals the one that would have been made up front.
  std::vector<char> drawn_;
  NoiseKey noise_;
  bool cached_ = false;
};

}  // namespace sbp
