#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fd.hpp"
#include "naive.hpp"
#include "quadrature.hpp"
#include "sbp/errors.hpp"
#include "sbp/truncmath.hpp"

using namespace sbp::truncmath;
namespace oracle = sbp::oracle;

namespace {

const double kPi = 3.14159265358979323846;

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

struct GoldenRecord {
  std::string name;
  std::vector<double> fields;
};

std::vector<GoldenRecord> load_golden() {
  std::ifstream in(std::string(SBP_FIXTURES) + "/truncmath_golden.csv");
  std::vector<GoldenRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    GoldenRecord r;
    std::getline(ss, r.name, ',');
    std::string tok;
    while (std::getline(ss, tok, ',')) r.fields.push_back(std::stod(tok));
    out.push_back(std::move(r));
  }
  return out;
}

// Finite-difference step in mu. Inside the box theta moves on the scale of
// sigma; when mu sits outside it, the draw hugs the near edge and moves on the
// scale of that distance. Steps much smaller than this drown in rounding of
// theta. Steps in sigma are always relative to sigma.
double fd_step_mu(const TruncParams& p) {
  const double outside = std::max({p.a - p.mu, p.mu - p.b, 0.0});
  return 1e-3 * std::max(p.sigma, outside);
}

}  // namespace

TEST(TruncmathGolden, FixtureMatches) {
  const auto records = load_golden();
  ASSERT_GT(records.size(), 50u);
  for (const auto& r : records) {
    const auto& v = r.fields;
    const auto P = [&] { return TruncParams{v[0], v[1], v[2], v[3]}; };
    std::vector<double> got, want;
    if (r.name == "std_normal_pdf") got = {std_normal_pdf(v[0])}, want = {v[1]};
    else if (r.name == "std_normal_cdf") got = {std_normal_cdf(v[0])}, want = {v[1]};
    else if (r.name == "inv_std_normal_cdf") got = {inv_std_normal_cdf(v[0])}, want = {v[1]};
    else if (r.name == "erfcx") got = {erfcx(v[0])}, want = {v[1]};
    else if (r.name == "trunc_normal_entropy") got = {trunc_normal_entropy(P())}, want = {v[4]};
    else if (r.name == "kl") got = {kl_trunc_logn_vs_trunc_logu(P())}, want = {v[4]};
    else if (r.name == "mean") got = {mean_trunc_lognormal(P())}, want = {v[4]};
    else if (r.name == "variance") got = {variance_trunc_lognormal(P())}, want = {v[4]};
    else if (r.name == "snr") got = {snr_trunc_lognormal(P())}, want = {v[4]};
    else if (r.name == "kl_grad") {
      const auto g = kl_grad(P());
      got = {g.d_mu, g.d_sigma}, want = {v[4], v[5]};
    } else if (r.name == "sample_grad") {
      const auto g = sample_grad(P(), v[4]);
      got = {g.d_mu, g.d_sigma}, want = {v[5], v[6]};
    } else if (r.name == "sample") got = {sample_trunc_lognormal(P(), v[4])}, want = {v[5]};
    else FAIL() << "unknown golden record " << r.name;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_LT(rel_err(got[i], want[i]), 1e-9) << r.name << " field " << i;
    }
  }
}

TEST(SpecialFunctions, NormalBasics) {
  EXPECT_NEAR(std_normal_pdf(0), 0.3989422804014327, 1e-16);
  EXPECT_EQ(std_normal_pdf(1.7), std_normal_pdf(-1.7));
  EXPECT_EQ(std_normal_cdf(0), 0.5);
  EXPECT_NEAR(std_normal_cdf(10), 1.0, 1e-15);
  for (double x : {-30.0, -5.0, -0.3, 0.0, 2.0, 8.0}) {
    EXPECT_NEAR(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, 1e-15);
  }
  // Lower tail keeps relative accuracy: Phi(-30) ~ 4.9e-198.
  EXPECT_LT(rel_err(std_normal_cdf(-30), 4.906713927148187e-198), 1e-12);
}

TEST(SpecialFunctions, InverseCdf) {
  EXPECT_EQ(inv_std_normal_cdf(0.5), 0.0);
  EXPECT_NEAR(inv_std_normal_cdf(std_normal_cdf(1.3)), 1.3, 1e-12);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lp(std::log(1e-10), std::log(0.5));
  for (int i = 0; i < 500; ++i) {
    double p = std::exp(lp(rng));
    if (i % 2) p = 1 - p;
    EXPECT_LT(rel_err(std_normal_cdf(inv_std_normal_cdf(p)), p), 1e-12) << p;
  }
  EXPECT_THROW(inv_std_normal_cdf(0.0), sbp::DomainError);
  EXPECT_THROW(inv_std_normal_cdf(1.0), sbp::DomainError);
  EXPECT_THROW(inv_std_normal_cdf(-0.1), sbp::DomainError);
}

TEST(SpecialFunctions, Erfcx) {
  EXPECT_EQ(erfcx(0), 1.0);
  EXPECT_LT(rel_err(erfcx(1e6), 1 / (1e6 * std::sqrt(kPi))), 1e-9);
  EXPECT_TRUE(std::isfinite(erfcx(1e8)));
  EXPECT_NEAR(erfcx(1e8) * 1e8 * std::sqrt(kPi), 1.0, 1e-12);
  for (double x = 0.01; x < 50; x *= 1.7) {
    EXPECT_GT(erfcx(x), 0);
    EXPECT_LE(erfcx(x), 1);
    if (x < 20) EXPECT_LT(rel_err(erfcx(x), std::exp(x * x) * std::erfc(x)), 1e-12) << x;
  }
}

TEST(Entropy, Limits) {
  const double uniform = std::log(20.0);
  EXPECT_NEAR(trunc_normal_entropy({-10, 1e6, -20, 0}), uniform, 1e-3);
  EXPECT_NEAR(trunc_normal_entropy({-10, 1, -20, 0}), 0.5 * std::log(2 * kPi * std::exp(1.0)), 1e-6);
}

TEST(Kl, LimitsAndSign) {
  EXPECT_LE(kl_trunc_logn_vs_trunc_logu({-10, 1e3, -20, 0}), 1e-2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mu(-30, 10), ls(-6, 3);
  for (int i = 0; i < 2000; ++i) {
    EXPECT_GE(kl_trunc_logn_vs_trunc_logu({mu(rng), std::exp(ls(rng)), -20, 0}), -1e-12);
  }
  // Nonincreasing in sigma once sigma exceeds the box width.
  double prev = kl_trunc_logn_vs_trunc_logu({-10, 20, -20, 0});
  for (double s = 25; s < 1e4; s *= 1.25) {
    const double k = kl_trunc_logn_vs_trunc_logu({-10, s, -20, 0});
    EXPECT_LE(k, prev + 1e-15) << s;
    prev = k;
  }
}

TEST(Kl, DomainErrors) {
  EXPECT_THROW(kl_trunc_logn_vs_trunc_logu({0, 0, -20, 0}), sbp::DomainError);
  EXPECT_THROW(kl_trunc_logn_vs_trunc_logu({0, -1, -20, 0}), sbp::DomainError);
  EXPECT_THROW(kl_trunc_logn_vs_trunc_logu({0, 1, 0, 0}), sbp::DomainError);
  EXPECT_THROW(kl_trunc_logn_vs_trunc_logu({NAN, 1, -20, 0}), sbp::DomainError);
  EXPECT_THROW(mean_trunc_lognormal({0, 1, 1, -1}), sbp::DomainError);
  EXPECT_THROW(sample_trunc_lognormal({0, 1, -20, 0}, 0.0), sbp::DomainError);
  EXPECT_THROW(sample_trunc_lognormal({0, 1, -20, 0}, 1.0), sbp::DomainError);
}

TEST(Quadrature, AgreesOnRandomBox) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu(-20, 5), ls(-6, 3);
  for (int i = 0; i < 60; ++i) {
    const TruncParams p{mu(rng), std::exp(ls(rng)), -20, 0};
    const auto q = oracle::quad_stats(p);
    EXPECT_NEAR(kl_trunc_logn_vs_trunc_logu(p), q.kl, 1e-6) << p.mu << " " << p.sigma;
    EXPECT_LT(rel_err(mean_trunc_lognormal(p), q.mean), 1e-8) << p.mu << " " << p.sigma;
    EXPECT_LT(rel_err(variance_trunc_lognormal(p), q.variance), 1e-8) << p.mu << " " << p.sigma;
  }
}

TEST(Moments, Limits) {
  EXPECT_LT(rel_err(mean_trunc_lognormal({-5, 1e-6, -20, 0}), std::exp(-5.0)), 1e-9);
  EXPECT_NEAR(variance_trunc_lognormal({-5, 1e-8, -20, 0}), 0.0, 1e-12);
  EXPECT_GT(snr_trunc_lognormal({-5, 1e-4, -20, 0}), 1e3);
  const double m = mean_trunc_lognormal({0, 1, -20, 0});
  EXPECT_LT(m, 1.0);
  const double wide = mean_trunc_lognormal({-10, 15, -20, 0});
  EXPECT_TRUE(std::isfinite(wide));
  EXPECT_GT(wide, std::exp(-20.0));
  EXPECT_LT(wide, 1.0);
  // A collapsed group has SNR below one.
  EXPECT_LT(snr_trunc_lognormal({-10, 5, -20, 0}), 1.0);
}

TEST(Moments, RangeAndConsistency) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(-30, 10), ls(-6, 3);
  const double bound = (1 - std::exp(-20.0)) * (1 - std::exp(-20.0)) / 4;
  for (int i = 0; i < 2000; ++i) {
    const TruncParams p{mu(rng), std::exp(ls(rng)), -20, 0};
    const auto mo = moments_trunc_lognormal(p);
    EXPECT_GT(mo.mean, std::exp(-20.0));
    EXPECT_LT(mo.mean, 1.0);
    EXPECT_GE(mo.variance, -1e-12);
    EXPECT_LE(mo.variance, bound);
    EXPECT_GT(mo.snr, 0);
    if (std::isfinite(mo.snr) && mo.variance > 0) {
      EXPECT_LT(rel_err(mo.snr * std::sqrt(mo.variance), mo.mean), 1e-8);
    }
    EXPECT_EQ(mo.mean, mean_trunc_lognormal(p));
    EXPECT_EQ(mo.snr, snr_trunc_lognormal(p));
  }
}

TEST(Moments, SnrMatchesQuadratureGrid) {
  for (double mu = -15; mu <= 0; mu += 1.5) {
    for (double s : {0.1, 0.3, 1.0, 3.0, 10.0}) {
      const TruncParams p{mu, s, -20, 0};
      const auto q = oracle::quad_stats(p);
      EXPECT_LT(rel_err(snr_trunc_lognormal(p), q.mean / std::sqrt(q.variance)), 1e-6)
          << mu << " " << s;
    }
  }
}

TEST(Moments, StableMatchesNaiveWhereFinite) {
  int compared = 0;
  for (int i = 0; i < 50; ++i) {
    for (int j = 1; j <= 50; ++j) {
      const TruncParams p{-30 + 40.0 * i / 49, 20.0 * j / 50, -20, 0};
      const auto mo = moments_trunc_lognormal(p);
      ASSERT_TRUE(std::isfinite(mo.mean) && std::isfinite(mo.snr)) << p.mu << " " << p.sigma;
      if (auto nv = oracle::naive_moments(p)) {
        ++compared;
        EXPECT_LT(rel_err(mo.mean, nv->mean), 1e-8) << p.mu << " " << p.sigma;
        EXPECT_LT(rel_err(mo.snr, nv->snr), 1e-8) << p.mu << " " << p.sigma;
      }
    }
  }
  EXPECT_GT(compared, 100);
}

TEST(Sampler, RangeMonotoneAndLimits) {
  const TruncParams p{-2, 1, -20, 0};
  double prev = 0;
  for (double u = 1e-7; u < 1; u += 0.01) {
    const double t = sample_trunc_lognormal(p, u);
    EXPECT_GT(t, std::exp(-20.0));
    EXPECT_LT(t, 1.0);
    EXPECT_GT(t, prev);
    prev = t;
  }
  EXPECT_NEAR(sample_trunc_lognormal({-10, 3, -20, 0}, 0.5), std::exp(-10.0), 1e-12);
  // With sigma wide relative to the box the edges are reached at u -> 0, 1.
  const TruncParams w{-10, 50, -20, 0};
  EXPECT_LT(rel_err(sample_trunc_lognormal(w, 1e-12), std::exp(-20.0)), 1e-9);
  EXPECT_LT(rel_err(sample_trunc_lognormal(w, 1 - 1e-12), 1.0), 1e-9);
}

TEST(Sampler, OpenUniformRange) {
  EXPECT_GT(open_uniform(0.0), 0.0);
  EXPECT_LT(open_uniform(1.0), 1.0);
  EXPECT_NEAR(open_uniform(0.25), 0.25, 1e-7);
}

TEST(Gradients, KlSymmetricStationaryPoint) {
  for (double s : {0.1, 1.0, 7.0}) EXPECT_NEAR(kl_grad({-10, s, -20, 0}).d_mu, 0.0, 1e-12);
}

TEST(Gradients, SampleDegenerate) {
  const auto g = sample_grad({-3, 1e-6, -20, 0}, 0.4);
  EXPECT_LT(rel_err(g.d_mu, std::exp(-3.0)), 1e-5);
}

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> mu(-20, 5), ls(-6, 3), unif(0.001, 0.999);
  for (int i = 0; i < 100; ++i) {
    const TruncParams p{mu(rng), std::exp(ls(rng)), -20, 0};
    const double u = unif(rng);
    const double h = fd_step_mu(p), hs = 1e-3 * p.sigma;
    const auto kl_mu = [&](double m) { return kl_trunc_logn_vs_trunc_logu({m, p.sigma, p.a, p.b}); };
    const auto kl_s = [&](double s) { return kl_trunc_logn_vs_trunc_logu({p.mu, s, p.a, p.b}); };
    const auto th_mu = [&](double m) { return sample_trunc_lognormal({m, p.sigma, p.a, p.b}, u); };
    const auto th_s = [&](double s) { return sample_trunc_lognormal({p.mu, s, p.a, p.b}, u); };
    const auto kg = kl_grad(p);
    const auto sg = sample_grad(p, u);
    EXPECT_TRUE(oracle::grad_close(kg.d_mu, oracle::central_diff(kl_mu, p.mu, h), 1e-4))
        << p.mu << " " << p.sigma;
    EXPECT_TRUE(oracle::grad_close(kg.d_sigma, oracle::central_diff(kl_s, p.sigma, hs), 1e-4))
        << p.mu << " " << p.sigma;
    EXPECT_TRUE(oracle::grad_close(sg.d_mu, oracle::central_diff(th_mu, p.mu, h), 1e-4, 1e-300))
        << p.mu << " " << p.sigma << " " << u;
    EXPECT_TRUE(oracle::grad_close(sg.d_sigma, oracle::central_diff(th_s, p.sigma, hs), 1e-4, 1e-300))
        << p.mu << " " << p.sigma << " " << u;
  }
}
