#include "sbp/truncmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sbp/errors.hpp"

namespace sbp::truncmath {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrtPi = 1.77245385090551602730;
constexpr double kSqrtHalfPi = 1.25331413731550025121;
constexpr double kSqrt2Pi = 2.50662827463100050242;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// exp(x*x) with the rounding error of the square folded back in; matters once
// x*x is in the hundreds.
double exp_square(double x) {
  const double hi = x * x;
  const double lo = std::fma(x, x, -hi);
  return std::exp(hi) * (1.0 + lo);
}

// Modified Lentz evaluation of
//   sqrt(pi) erfcx(x) = 1 / (x + (1/2) / (x + 1 / (x + (3/2) / (x + ...))))
double erfcx_continued_fraction(double x) {
  constexpr double kTiny = 1e-300;
  double f = x;
  double c = x;
  double d = 0.0;
  for (int k = 1; k < 500; ++k) {
    const double ak = 0.5 * k;
    d = x + ak * d;
    if (d == 0.0) d = kTiny;
    d = 1.0 / d;
    c = x + ak / c;
    if (c == 0.0) c = kTiny;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / (kSqrtPi * f);
}

double log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

// Mills ratio (1 - Phi(c)) / phi(c) for c >= 0.
double mills(double c) { return kSqrtHalfPi * erfcx(c * kInvSqrt2); }

// log of the half-line integral J(c) = int_0^inf exp(-c w - w^2 / 2) dw.
// For c >= 0 this is the log Mills ratio.
double log_half_line(double c) {
  if (c >= 0.0) return std::log(mills(c));
  return kLogSqrt2Pi + 0.5 * c * c + log_std_normal_cdf(-c);
}

constexpr int kOrder = 8;
using Cumulants = std::array<double, kOrder + 1>;  // index 1..kOrder

// Coefficients r_j of log(c * Mills(c)) = sum_j r_j c^{-2j}, from the
// asymptotic series c * Mills(c) ~ sum_k (-1)^k (2k-1)!! c^{-2k}.
constexpr int kAsymTerms = 48;
const std::array<double, kAsymTerms + 1>& log_mills_coeffs() {
  static const auto coeffs = [] {
    std::array<long double, kAsymTerms + 1> s{};
    std::array<long double, kAsymTerms + 1> r{};
    s[0] = 1.0L;
    for (int k = 1; k <= kAsymTerms; ++k) s[k] = -s[k - 1] * (2 * k - 1);
    for (int n = 1; n <= kAsymTerms; ++n) {
      long double acc = 0.0L;
      for (int k = 1; k < n; ++k) acc += k * r[k] * s[n - k];
      r[n] = s[n] - acc / n;
    }
    std::array<double, kAsymTerms + 1> out{};
    for (int j = 0; j <= kAsymTerms; ++j) out[j] = static_cast<double>(r[j]);
    return out;
  }();
  return coeffs;
}

// Cumulants of W with density proportional to exp(-c w - w^2 / 2) on w >= 0.
// These are (-1)^n d^n/dc^n log Mills(c).
Cumulants half_line_cumulants(double c) {
  Cumulants k{};
  if (c >= 8.0) {
    // Term-by-term derivatives of the asymptotic series, truncated at the
    // smallest term.
    const auto& r = log_mills_coeffs();
    const double inv_c = 1.0 / c;
    const double inv_c2 = inv_c * inv_c;
    double fact = 1.0;  // (n-1)!
    for (int n = 1; n <= kOrder; ++n) {
      if (n > 1) fact *= (n - 1);
      const double lead = fact * std::pow(inv_c, n);
      double sum = 0.0;
      double prev = kInf;
      double cpow = std::pow(inv_c, n);
      for (int j = 1; j <= kAsymTerms; ++j) {
        cpow *= inv_c2;
        double rising = 1.0;
        for (int i = 0; i < n; ++i) rising *= (2 * j + i);
        const double term = r[j] * rising * cpow;
        if (std::abs(term) > prev) break;
        sum += term;
        prev = std::abs(term);
        if (prev < 1e-19 * lead) break;
      }
      k[n] = lead + sum;
    }
    return k;
  }
  // g = 1/Mills - c solves g' = (c + g) g - 1; expand g(c + h) in h.
  std::array<double, kOrder> g{};
  g[0] = 1.0 / mills(c) - c;
  for (int m = 0; m + 1 < kOrder; ++m) {
    double p = c * g[m];
    if (m > 0) p += g[m - 1];
    for (int i = 0; i <= m; ++i) p += g[i] * g[m - i];
    if (m == 0) p -= 1.0;
    g[m + 1] = p / (m + 1);
  }
  double fact = 1.0;
  for (int n = 1; n <= kOrder; ++n) {
    if (n > 1) fact *= (n - 1);
    k[n] = ((n % 2 == 1) ? 1.0 : -1.0) * fact * g[n - 1];
  }
  return k;
}

// Raw moments E[X^n], n = 0..kOrder, of the standard normal truncated to
// [alpha, beta]; r_alpha = phi(alpha) / Z, r_beta = phi(beta) / Z.
std::array<double, kOrder + 1> raw_moments(double alpha, double beta,
                                           double r_alpha, double r_beta) {
  std::array<double, kOrder + 1> m{};
  m[0] = 1.0;
  m[1] = r_alpha - r_beta;
  double pa = alpha;
  double pb = beta;
  for (int n = 2; n <= kOrder; ++n) {
    const double ta = r_alpha == 0.0 ? 0.0 : pa * r_alpha;
    const double tb = r_beta == 0.0 ? 0.0 : pb * r_beta;
    m[n] = (n - 1) * m[n - 2] + ta - tb;
    pa *= alpha;
    pb *= beta;
  }
  return m;
}

Cumulants cumulants_from_raw(const std::array<double, kOrder + 1>& m) {
  // Central moments first, then the standard moment-to-cumulant relations.
  const double mean = m[1];
  std::array<double, kOrder + 1> c{};
  for (int n = 0; n <= kOrder; ++n) {
    double acc = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= n; ++j) {
      acc += binom * m[n - j] * std::pow(-mean, j);
      binom = binom * (n - j) / (j + 1);
    }
    c[n] = acc;
  }
  c[1] = 0.0;
  Cumulants k{};
  k[1] = mean;
  k[2] = c[2];
  k[3] = c[3];
  k[4] = c[4] - 3 * c[2] * c[2];
  k[5] = c[5] - 10 * c[3] * c[2];
  k[6] = c[6] - 15 * c[4] * c[2] - 10 * c[3] * c[3] + 30 * std::pow(c[2], 3);
  k[7] = c[7] - 21 * c[5] * c[2] - 35 * c[4] * c[3] + 210 * c[3] * c[2] * c[2];
  k[8] = c[8] - 28 * c[6] * c[2] - 56 * c[5] * c[3] - 35 * c[4] * c[4] +
         420 * c[4] * c[2] * c[2] + 560 * c[3] * c[3] * c[2] -
         630 * std::pow(c[2], 4);
  return k;
}

// log E[e^{2sY}] - 2 log E[e^{sY}] from the cumulants of Y.
double log_ratio_series(const Cumulants& k, double s) {
  double acc = 0.0;
  double sp = s;
  double fact = 1.0;
  for (int n = 2; n <= kOrder; ++n) {
    sp *= s;
    fact *= n;
    acc += k[n] * sp * (std::ldexp(1.0, n) - 2.0) / fact;
  }
  return acc;
}

// Below this spread the closed-form log ratio is dominated by cancellation
// and the cumulant series takes over.
constexpr double kSeriesSpread = 1e-4;

// Where the mass sits relative to the truncation box decides how moments are
// evaluated.
//  kDirect: the box contains the normal mode; closed forms are well scaled.
//  kLower:  mu is above b; write t = b - sigma W with W >= 0.
//  kUpper:  mu is below a; write t = a + sigma W with W >= 0.
// In the tail frames W has density proportional to exp(-c w - w^2 / 2) and
// the far end of the box is ignored when it carries no representable mass.
struct Frame {
  enum class Kind { kDirect, kLower, kUpper } kind = Kind::kDirect;
  double alpha = 0.0;
  double beta = 0.0;
  double log_z = 0.0;
  double c = 0.0;
  double s = 0.0;     // theta = exp(base + s W)
  double base = 0.0;
};

bool far_end_negligible(double c, double width) {
  return c * width + 0.5 * width * width >= 40.0;
}

Frame make_frame(const TruncParams& p) {
  validate(p);
  Frame f;
  f.alpha = (p.a - p.mu) / p.sigma;
  f.beta = (p.b - p.mu) / p.sigma;
  f.log_z = log_std_normal_cdf_diff(f.alpha, f.beta);
  const double width = f.beta - f.alpha;
  if (f.beta < 0.0 && far_end_negligible(-f.beta, width)) {
    f.kind = Frame::Kind::kLower;
    f.c = -f.beta;
    f.s = -p.sigma;
    f.base = p.b;
  } else if (f.alpha > 0.0 &&
             far_end_negligible(f.alpha - 2.0 * p.sigma, width)) {
    f.kind = Frame::Kind::kUpper;
    f.c = f.alpha;
    f.s = p.sigma;
    f.base = p.a;
  }
  return f;
}

struct DirectRatios {
  double r_alpha;
  double r_beta;
};

DirectRatios direct_ratios(const Frame& f) {
  return {std::exp(log_pdf(f.alpha) - f.log_z),
          std::exp(log_pdf(f.beta) - f.log_z)};
}

double log_mean(const Frame& f, const TruncParams& p) {
  if (f.kind == Frame::Kind::kDirect) {
    return p.mu + 0.5 * p.sigma * p.sigma +
           log_std_normal_cdf_diff(f.alpha - p.sigma, f.beta - p.sigma) -
           f.log_z;
  }
  return f.base + log_half_line(f.c - f.s) - log_half_line(f.c);
}

// log(E[theta^2] / E[theta]^2).
double log_ratio(const Frame& f, const TruncParams& p) {
  const double sg = p.sigma;
  if (f.kind == Frame::Kind::kDirect) {
    const auto r = direct_ratios(f);
    const Cumulants k =
        cumulants_from_raw(raw_moments(f.alpha, f.beta, r.r_alpha, r.r_beta));
    if (sg * sg * k[2] < kSeriesSpread) return log_ratio_series(k, sg);
    return sg * sg +
           log_std_normal_cdf_diff(f.alpha - 2 * sg, f.beta - 2 * sg) -
           2 * log_std_normal_cdf_diff(f.alpha - sg, f.beta - sg) + f.log_z;
  }
  const Cumulants k = half_line_cumulants(f.c);
  if (sg * sg * k[2] < kSeriesSpread) return log_ratio_series(k, f.s);
  return log_half_line(f.c - 2 * f.s) - 2 * log_half_line(f.c - f.s) +
         log_half_line(f.c);
}

// Entropy of the truncated normal in t.
double entropy(const Frame& f, const TruncParams& p) {
  if (f.kind == Frame::Kind::kDirect) {
    const auto r = direct_ratios(f);
    const double ta = r.r_alpha == 0.0 ? 0.0 : f.alpha * r.r_alpha;
    const double tb = r.r_beta == 0.0 ? 0.0 : f.beta * r.r_beta;
    const double m2 = 1.0 + ta - tb;
    return std::log(p.sigma) + kLogSqrt2Pi + f.log_z + 0.5 * m2;
  }
  // -log p_W(w) = log J(c) + c w + w^2 / 2
  const Cumulants k = half_line_cumulants(f.c);
  return std::log(p.sigma) + log_half_line(f.c) + f.c * k[1] +
         0.5 * (k[2] + k[1] * k[1]);
}

}  // namespace

void validate(const TruncParams& p) {
  if (!std::isfinite(p.mu) || !std::isfinite(p.sigma) || !std::isfinite(p.a) ||
      !std::isfinite(p.b)) {
    throw DomainError("truncated log-normal parameters must be finite");
  }
  if (!(p.sigma > 0.0)) {
    throw DomainError("sigma must be positive, got " + std::to_string(p.sigma));
  }
  if (!(p.a < p.b)) {
    throw DomainError("truncation requires a < b");
  }
}

double std_normal_pdf(double x) { return std::exp(log_pdf(x)); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_std_normal_cdf(double x) {
  if (std::isnan(x)) return x;
  if (x == -kInf) return -kInf;
  if (x < -1.0) return std::log(0.5 * erfcx(-x * kInvSqrt2)) - 0.5 * x * x;
  return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
}

double log_std_normal_cdf_diff(double lo, double hi) {
  if (lo == hi) return -kInf;
  if (!(lo < hi)) throw DomainError("log_std_normal_cdf_diff requires lo < hi");
  if (hi <= 0.0) {
    const double lh = log_std_normal_cdf(hi);
    const double ll = log_std_normal_cdf(lo);
    return lh + std::log(-std::expm1(ll - lh));
  }
  if (lo >= 0.0) return log_std_normal_cdf_diff(-hi, -lo);
  // Straddles zero: 1 - Phi(lo) - Phi(-hi), or a sum of two erf values when
  // the interval is narrow enough that the tails are most of the mass.
  const double tails =
      0.5 * std::erfc(-lo * kInvSqrt2) + 0.5 * std::erfc(hi * kInvSqrt2);
  if (tails < 0.5) return std::log1p(-tails);
  return std::log(0.5 * (std::erf(hi * kInvSqrt2) + std::erf(-lo * kInvSqrt2)));
}

double erfcx(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) {
    if (x < -26.7) return kInf;
    return 2.0 * exp_square(x) - erfcx(-x);
  }
  if (x < 26.0) return exp_square(x) * std::erfc(x);
  if (x == kInf) return 0.0;
  return erfcx_continued_fraction(x);
}

double inv_std_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("inv_std_normal_cdf requires p in (0, 1)");
  }
  if (p > 0.5) return -inv_std_normal_cdf(1.0 - p);
  if (p < 1e-300) return inv_std_normal_cdf_from_log(std::log(p));
  // Acklam's rational approximation, relative error ~1e-9 before refinement.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // One Halley step on Phi(x) - p.
  const double e = std_normal_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double inv_std_normal_cdf_from_log(double log_p) {
  if (!(log_p < 0.0)) {
    throw DomainError("inv_std_normal_cdf_from_log requires log_p < 0");
  }
  if (log_p > -0.6931471805599453) {
    return -inv_std_normal_cdf(-std::expm1(log_p));
  }
  if (log_p > -690.0) return inv_std_normal_cdf(std::exp(log_p));
  // Far tail: start from log Phi(x) ~ -x^2/2 - log(-x) - log sqrt(2 pi) and
  // polish with Newton on log Phi.
  const double t = -2.0 * log_p;
  double x = -std::sqrt(t - std::log(t) - 2.0 * kLogSqrt2Pi);
  for (int it = 0; it < 50; ++it) {
    const double lc = log_std_normal_cdf(x);
    const double slope = std::exp(log_pdf(x) - lc);
    const double step = (lc - log_p) / slope;
    x -= step;
    if (std::abs(step) <= 1e-16 * std::abs(x)) break;
  }
  return x;
}

double trunc_normal_entropy(const TruncParams& p) {
  const Frame f = make_frame(p);
  return entropy(f, p);
}

double kl_trunc_logn_vs_trunc_logu(const TruncParams& p) {
  const Frame f = make_frame(p);
  return std::log(p.b - p.a) - entropy(f, p);
}

// dKL/dmu = -Cov(X^2, X) / (2 sigma), dKL/dsigma = -Var(X^2) / (2 sigma)
// for X the standardized truncated normal.
ParamGrad kl_grad(const TruncParams& p) {
  const Frame f = make_frame(p);
  double cov = 0.0;
  double var_sq = 0.0;
  if (f.kind == Frame::Kind::kDirect) {
    const auto r = direct_ratios(f);
    const auto m = raw_moments(f.alpha, f.beta, r.r_alpha, r.r_beta);
    cov = m[3] - m[2] * m[1];
    var_sq = m[4] - m[2] * m[2];
  } else {
    // X = beta - W (lower) or alpha + W (upper); both reduce to the same
    // positive combinations of W's moments.
    const Cumulants k = half_line_cumulants(f.c);
    const double v2 = k[2];
    const double c3 = k[3] + 2 * k[1] * k[2];
    const double v4 =
        k[4] + 4 * k[1] * k[3] + 2 * k[2] * k[2] + 4 * k[1] * k[1] * k[2];
    const double cw = 2 * f.c * v2 + c3;
    cov = f.kind == Frame::Kind::kLower ? -cw : cw;
    var_sq = 4 * f.c * f.c * v2 + 4 * f.c * c3 + v4;
  }
  return {-cov / (2 * p.sigma), -var_sq / (2 * p.sigma)};
}

double sample_trunc_lognormal(const TruncParams& p, double u) {
  return TruncLogNormalSampler(p).draw(u).theta;
}

ParamGrad sample_grad(const TruncParams& p, double u) {
  const TruncLogNormalSampler s(p);
  return s.grad(u, s.draw(u));
}

Moments moments_trunc_lognormal(const TruncParams& p) {
  const Frame f = make_frame(p);
  Moments m;
  m.mean = std::exp(log_mean(f, p));
  const double lr = log_ratio(f, p);
  if (lr > 0.0) {
    const double rel = std::expm1(lr);
    m.variance = m.mean * m.mean * rel;
    m.snr = 1.0 / std::sqrt(rel);
  } else {
    m.variance = 0.0;
    m.snr = kInf;
  }
  return m;
}

double mean_trunc_lognormal(const TruncParams& p) {
  const Frame f = make_frame(p);
  return std::exp(log_mean(f, p));
}

double variance_trunc_lognormal(const TruncParams& p) {
  return moments_trunc_lognormal(p).variance;
}

double snr_trunc_lognormal(const TruncParams& p) {
  return moments_trunc_lognormal(p).snr;
}

double open_uniform(double unit) {
  return kUniformEps + (1.0 - 2.0 * kUniformEps) * unit;
}

TruncLogNormalSampler::TruncLogNormalSampler(const TruncParams& p) : p_(p) {
  validate(p);
  alpha_ = (p.a - p.mu) / p.sigma;
  beta_ = (p.b - p.mu) / p.sigma;
  if (beta_ <= 0.0) {
    side_ = Side::kLower;
    log_cdf_near_ = log_std_normal_cdf(beta_);
    log_ratio_far_near_ = log_std_normal_cdf(alpha_) - log_cdf_near_;
  } else if (alpha_ >= 0.0) {
    side_ = Side::kUpper;
    log_cdf_near_ = log_std_normal_cdf(-alpha_);
    log_ratio_far_near_ = log_std_normal_cdf(-beta_) - log_cdf_near_;
  } else {
    side_ = Side::kMiddle;
    cdf_alpha_ = std_normal_cdf(alpha_);
    sf_beta_ = std_normal_cdf(-beta_);
    z_ = 0.5 * (std::erf(beta_ * kInvSqrt2) + std::erf(-alpha_ * kInvSqrt2));
  }
  if (side_ != Side::kMiddle && log_cdf_near_ > -600.0) {
    linear_ = true;
    cdf_near_ = std::exp(log_cdf_near_);
    ratio_far_near_ = std::exp(log_ratio_far_near_);
  }
}

double TruncLogNormalSampler::standardized(double u) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("sampler requires u in (0, 1)");
  }
  double x = 0.0;
  switch (side_) {
    case Side::kMiddle: {
      const double lo = cdf_alpha_ + z_ * u;
      if (lo <= 0.5) {
        x = inv_std_normal_cdf(lo);
      } else {
        x = -inv_std_normal_cdf(sf_beta_ + z_ * (1.0 - u));
      }
      break;
    }
    case Side::kLower: {
      if (linear_) {
        x = inv_std_normal_cdf(cdf_near_ * (u + (1.0 - u) * ratio_far_near_));
        break;
      }
      const double lp =
          log_cdf_near_ + std::log(u + (1.0 - u) * std::exp(log_ratio_far_near_));
      x = inv_std_normal_cdf_from_log(std::min(lp, -1e-300));
      break;
    }
    case Side::kUpper: {
      const double v = 1.0 - u;
      if (linear_) {
        x = -inv_std_normal_cdf(cdf_near_ * (v + (1.0 - v) * ratio_far_near_));
        break;
      }
      const double lp =
          log_cdf_near_ + std::log(v + (1.0 - v) * std::exp(log_ratio_far_near_));
      x = -inv_std_normal_cdf_from_log(std::min(lp, -1e-300));
      break;
    }
  }
  return std::clamp(x, alpha_, beta_);
}

TruncLogNormalSampler::Draw TruncLogNormalSampler::draw(double u) const {
  Draw d;
  d.x = standardized(u);
  d.theta = std::exp(p_.mu + p_.sigma * d.x);
  return d;
}

ParamGrad TruncLogNormalSampler::grad(double u, const Draw& d) const {
  // phi(alpha) / phi(x) and phi(beta) / phi(x), weighted by the CDF mixture
  // coefficients. The log form only matters when the ratio alone overflows.
  const double x = d.x;
  const double ea = 0.5 * (x - alpha_) * (x + alpha_);
  const double eb = 0.5 * (x - beta_) * (x + beta_);
  const double w_alpha = ea < 700.0 ? (1.0 - u) * std::exp(ea) : std::exp(std::log1p(-u) + ea);
  const double w_beta = eb < 700.0 ? u * std::exp(eb) : std::exp(std::log(u) + eb);
  const double ta = w_alpha == 0.0 ? 0.0 : alpha_ * w_alpha;
  const double tb = w_beta == 0.0 ? 0.0 : beta_ * w_beta;
  return {d.theta * (1.0 - w_alpha - w_beta), d.theta * (x - ta - tb)};
}

}  // namespace sbp::truncmath
