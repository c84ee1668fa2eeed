#include "sbp/adam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sbp/errors.hpp"
#include "sbp/sbp_layer.hpp"

namespace sbp {

template <typename T>
Adam<T>::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0) || !(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1) ||
      !(cfg.eps > 0) || !(cfg.sbp_lr >= 0)) {
    throw ConfigError("adam needs lr > 0, sbp_lr >= 0, beta1/beta2 in [0,1) and eps > 0");
  }
}

template <typename T>
void Adam<T>::step(const std::vector<ParamRef<T>>& params) {
  for (const auto& p : params) {
    for (T g : p.grad->values()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& p : params) {
    Moments& st = state_[p.name];
    const std::size_t n = p.value->size();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    double lo = -inf, hi = inf, lr = cfg_.lr;
    if (p.role == ParamRole::kSbpMu) lo = kMuMin, hi = kMuMax;
    if (p.role == ParamRole::kSbpLogSigma) lo = kLogSigmaMin, hi = kLogSigmaMax;
    if (lo != -inf && cfg_.sbp_lr > 0) lr = cfg_.sbp_lr;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.eps;
    T* w = p.value->data();
    const T* g = p.grad->data();
    double* m = st.m.data();
    double* v = st.v.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = mi;
      v[i] = vi;
      const double nw = static_cast<double>(w[i]) - lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      w[i] = static_cast<T>(std::min(std::max(nw, lo), hi));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sbp
