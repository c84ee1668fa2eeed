#pragma once

// Scalar numerics for the truncated normal / truncated log-normal family used
// by SBP noise layers. Everything here is double precision and pure.
//
// Notation: a log-space variable t ~ N(mu, sigma^2) truncated to [a, b];
// theta = exp(t). alpha = (a - mu) / sigma, beta = (b - mu) / sigma and
// Z = Phi(beta) - Phi(alpha).

#include <array>

namespace sbp::truncmath {

struct TruncParams {
  double mu = 0.0;
  double sigma = 1.0;
  double a = -20.0;
  double b = 0.0;
};

struct ParamGrad {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

/// Throws DomainError unless sigma > 0, a < b and all fields are finite.
void validate(const TruncParams& p);

// Standard normal helpers.
double std_normal_pdf(double x);
double std_normal_cdf(double x);
double log_std_normal_cdf(double x);
/// log(Phi(hi) - Phi(lo)) for lo < hi, accurate in both tails.
double log_std_normal_cdf_diff(double lo, double hi);
/// Phi^{-1}(p) for p in (0, 1): rational approximation plus one Halley step.
double inv_std_normal_cdf(double p);
/// x with log(Phi(x)) == log_p; usable far below the double underflow limit.
double inv_std_normal_cdf_from_log(double log_p);

/// Scaled complementary error function exp(x^2) * erfc(x).
double erfcx(double x);

double trunc_normal_entropy(const TruncParams& p);
/// KL(truncated log-normal || truncated log-uniform on [e^a, e^b]).
double kl_trunc_logn_vs_trunc_logu(const TruncParams& p);
ParamGrad kl_grad(const TruncParams& p);

/// exp(mu + sigma * Phi^{-1}(Phi(alpha) + Z u)) for u in (0, 1).
double sample_trunc_lognormal(const TruncParams& p, double u);
/// Pathwise derivative of sample_trunc_lognormal at fixed u.
ParamGrad sample_grad(const TruncParams& p, double u);

double mean_trunc_lognormal(const TruncParams& p);
double variance_trunc_lognormal(const TruncParams& p);
/// mean / sqrt(variance). Returns +infinity when the variance underflows to 0
/// (sigma vanishingly small).
double snr_trunc_lognormal(const TruncParams& p);

/// Moments of the log-normal bundled together; cheaper than three calls.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double snr = 0.0;
};
Moments moments_trunc_lognormal(const TruncParams& p);

/// Uniform draws are mapped into (kUniformEps, 1 - kUniformEps) so the
/// inverse CDF stays finite.
inline constexpr double kUniformEps = 1e-7;
/// Maps unit in [0, 1] onto the open interval used by the sampler.
double open_uniform(double unit);

/// Per-parameter precomputation for repeated sampling at fixed (mu, sigma).
/// Used by the noise layers where one group is sampled M times per step.
class TruncLogNormalSampler {
 public:
  struct Draw {
    double theta = 0.0;
    double x = 0.0;  // standardized normal value, theta = exp(mu + sigma x)
  };

  explicit TruncLogNormalSampler(const TruncParams& p);

  Draw draw(double u) const;
  /// d theta / d mu and d theta / d sigma for a previous draw at the same u.
  ParamGrad grad(double u, const Draw& d) const;

  const TruncParams& params() const { return p_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

 private:
  enum class Side { kMiddle, kLower, kUpper };

  double standardized(double u) const;

  TruncParams p_;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  Side side_ = Side::kMiddle;
  // kMiddle: Phi(alpha), Phi(-beta), Z.
  double cdf_alpha_ = 0.0;
  double sf_beta_ = 0.0;
  double z_ = 0.0;
  // kLower / kUpper (in mirrored coordinates): log Phi of the near and far
  // endpoint and their difference.
  double log_cdf_near_ = 0.0;
  double log_ratio_far_near_ = 0.0;
  // Same quantities in linear space when Phi(near) is comfortably normal;
  // saves a log/exp pair per draw.
  bool linear_ = false;
  double cdf_near_ = 0.0;
  double ratio_far_near_ = 0.0;
};

}  // namespace sbp::truncmath
