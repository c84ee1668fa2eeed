#include "sbp/sbp_layer.hpp"

#include <algorithm>
#include <cmath>

#include "sbp/errors.hpp"

namespace sbp {

namespace tm = truncmath;

template <typename T>
SbpLayer<T>::SbpLayer(GroupPattern pattern, double a, double b, double threshold)
    : pattern_(std::move(pattern)),
      a_(a),
      b_(b),
      threshold_(threshold),
      mu_({pattern_.groups()}),
      log_sigma_({pattern_.groups()}),
      g_mu_({pattern_.groups()}),
      g_log_sigma_({pattern_.groups()}) {
  if (pattern_.features() == 0 || pattern_.groups() == 0) {
    throw ShapeError("sbp layer needs at least one feature and one group");
  }
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ConfigError("sbp truncation needs finite a < b");
  }
  set_threshold(threshold);
  reset();
}

template <typename T>
void SbpLayer<T>::set_threshold(double t) {
  if (!(t >= 0)) throw ConfigError("snr threshold must be >= 0");
  threshold_ = t;
}

template <typename T>
Shape SbpLayer<T>::output_shape(const Shape& input) const {
  if (input != pattern_.input_shape()) {
    throw ShapeError("sbp layer expects " + shape_str(pattern_.input_shape()) + ", got " +
                     shape_str(input));
  }
  return input;
}

template <typename T>
tm::TruncParams SbpLayer<T>::group_params(std::size_t g) const {
  return {static_cast<double>(mu_[g]), std::exp(static_cast<double>(log_sigma_[g])), a_, b_};
}

template <typename T>
void SbpLayer<T>::reset() {
  set_all(kInitMu, std::log(kInitSigma));
}

template <typename T>
void SbpLayer<T>::set_all(double mu, double log_sigma) {
  mu_.fill(static_cast<T>(mu));
  log_sigma_.fill(static_cast<T>(log_sigma));
}

template <typename T>
void SbpLayer<T>::clamp() {
  for (auto& v : mu_.values()) v = std::clamp(v, T(kMuMin), T(kMuMax));
  for (auto& v : log_sigma_.values()) v = std::clamp(v, T(kLogSigmaMin), T(kLogSigmaMax));
}

template <typename T>
Tensor<T> SbpLayer<T>::apply_scales(const Tensor<T>& x, const double* scales,
                                    std::size_t stride) const {
  const std::size_t m = x.dim(0), f = pattern_.features();
  Tensor<T> y(x.shape());
  const auto& map = pattern_.group_map();
  for (std::size_t n = 0; n < m; ++n) {
    const double* s = scales + n * stride;
    const T* xr = x.data() + n * f;
    T* yr = y.data() + n * f;
    for (std::size_t i = 0; i < f; ++i) yr[i] = static_cast<T>(xr[i] * s[map[i]]);
  }
  return y;
}

template <typename T>
Tensor<T> SbpLayer<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) {
  if (x.rank() < 1) throw ShapeError("sbp layer needs a batch axis");
  output_shape(Shape(x.shape().begin() + 1, x.shape().end()));
  const std::size_t m = x.dim(0), g = groups();

  if (ctx.mode == Mode::kEval) {
    cached_ = false;
    const std::vector<double> scales = eval_scales();
    return apply_scales(x, scales.data(), 0);
  }

  samplers_.clear();
  samplers_.reserve(g);
  for (std::size_t k = 0; k < g; ++k) samplers_.emplace_back(group_params(k));
  u_.assign(m * g, 0.0);
  theta_.assign(m * g, 0.0);
  draws_.assign(m * g, {});
  drawn_.assign(m * g, 0);
  noise_ = ctx.noise;
  const std::size_t f = pattern_.features();
  const auto& map = pattern_.group_map();
  for (std::size_t n = 0; n < m; ++n) {
    const T* xr = x.data() + n * f;
    for (std::size_t i = 0; i < f; ++i) {
      if (xr[i] != T(0) && !drawn_[n * g + map[i]]) draw(n, map[i]);
    }
  }
  x_ = x;
  cached_ = true;
  return apply_scales(x, theta_.data(), g);
}

template <typename T>
void SbpLayer<T>::draw(std::size_t n, std::size_t k) {
  const std::size_t i = n * groups() + k;
  u_[i] = tm::open_uniform(noise_.unit(n, k));
  draws_[i] = samplers_[k].draw(u_[i]);
  theta_[i] = draws_[i].theta;
  drawn_[i] = 1;
}

template <typename T>
std::vector<double> SbpLayer<T>::last_noise() const {
  std::vector<double> out = theta_;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!drawn_[i]) {
      const std::size_t n = i / groups(), k = i % groups();
      out[i] = samplers_[k].draw(tm::open_uniform(noise_.unit(n, k))).theta;
    }
  }
  return out;
}

template <typename T>
Tensor<T> SbpLayer<T>::backward(const Tensor<T>& grad_y) {
  if (!cached_) throw StateError("sbp backward without a cached training forward");
  if (grad_y.shape() != x_.shape()) {
    throw ShapeError("sbp backward: gradient shape " + shape_str(grad_y.shape()) +
                     " does not match input " + shape_str(x_.shape()));
  }
  const std::size_t m = x_.dim(0), f = pattern_.features(), g = groups();
  const auto& map = pattern_.group_map();

  Tensor<T> gx;
  if (this->input_grad_needed_) {
    for (std::size_t n = 0; n < m; ++n) {
      const T* gr = grad_y.data() + n * f;
      for (std::size_t i = 0; i < f; ++i) {
        if (gr[i] != T(0) && !drawn_[n * g + map[i]]) draw(n, map[i]);
      }
    }
    gx = apply_scales(grad_y, theta_.data(), g);
  }
  std::vector<double> acc(g);
  std::vector<double> d_mu(g, 0.0), d_ls(g, 0.0);
  for (std::size_t n = 0; n < m; ++n) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* xr = x_.data() + n * f;
    const T* gr = grad_y.data() + n * f;
    for (std::size_t i = 0; i < f; ++i) {
      acc[map[i]] += static_cast<double>(gr[i]) * static_cast<double>(xr[i]);
    }
    for (std::size_t k = 0; k < g; ++k) {
      // acc is zero whenever the draw was skipped.
      if (acc[k] == 0.0) continue;
      const std::size_t i = n * g + k;
      const tm::ParamGrad dg = samplers_[k].grad(u_[i], draws_[i]);
      d_mu[k] += acc[k] * dg.d_mu;
      d_ls[k] += acc[k] * dg.d_sigma;
    }
  }
  for (std::size_t k = 0; k < g; ++k) {
    g_mu_[k] += static_cast<T>(d_mu[k]);
    g_log_sigma_[k] += static_cast<T>(d_ls[k] * samplers_[k].params().sigma);
  }
  return gx;
}

template <typename T>
std::vector<ParamRef<T>> SbpLayer<T>::params() {
  return {{"mu", &mu_, &g_mu_, ParamRole::kSbpMu},
          {"log_sigma", &log_sigma_, &g_log_sigma_, ParamRole::kSbpLogSigma}};
}

template <typename T>
std::unique_ptr<Layer<T>> SbpLayer<T>::clone() const {
  return std::make_unique<SbpLayer<T>>(*this);
}

template <typename T>
nlohmann::json SbpLayer<T>::spec() const {
  nlohmann::json j = {{"kind", "sbp"},
                      {"pattern", GroupPattern::kind_name(pattern_.kind())},
                      {"input_shape", pattern_.input_shape()},
                      {"a", a_},
                      {"b", b_},
                      {"threshold", threshold_}};
  if (pattern_.kind() == GroupPattern::Kind::kCustom) j["group_map"] = pattern_.group_map();
  return j;
}

template <typename T>
double SbpLayer<T>::kl_sum() const {
  double s = 0.0;
  for (std::size_t k = 0; k < groups(); ++k) s += tm::kl_trunc_logn_vs_trunc_logu(group_params(k));
  return s;
}

template <typename T>
void SbpLayer<T>::kl_grads(std::vector<double>& d_mu, std::vector<double>& d_log_sigma) const {
  d_mu.resize(groups());
  d_log_sigma.resize(groups());
  for (std::size_t k = 0; k < groups(); ++k) {
    const tm::TruncParams p = group_params(k);
    const tm::ParamGrad gr = tm::kl_grad(p);
    d_mu[k] = gr.d_mu;
    d_log_sigma[k] = gr.d_sigma * p.sigma;
  }
}

template <typename T>
PruneReport SbpLayer<T>::prune_report() const {
  PruneReport r;
  r.snr.resize(groups());
  r.kept.resize(groups());
  for (std::size_t k = 0; k < groups(); ++k) {
    r.snr[k] = tm::snr_trunc_lognormal(group_params(k));
    // An infinite threshold prunes everything, even noiseless groups.
    r.kept[k] = std::isfinite(threshold_) && r.snr[k] >= threshold_;
    r.kept_count += r.kept[k] ? 1 : 0;
  }
  return r;
}

template <typename T>
std::vector<double> SbpLayer<T>::eval_scales() const {
  std::vector<double> s(groups(), 0.0);
  for (std::size_t k = 0; k < groups(); ++k) {
    const tm::Moments mo = tm::moments_trunc_lognormal(group_params(k));
    if (std::isfinite(threshold_) && mo.snr >= threshold_) s[k] = mo.mean;
  }
  return s;
}

template class SbpLayer<float>;
template class SbpLayer<double>;

}  // namespace sbp
