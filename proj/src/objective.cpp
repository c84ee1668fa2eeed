#include "sbp/objective.hpp"

#include <algorithm>
#include <cmath>

#include "sbp/errors.hpp"

namespace sbp {

template <typename T>
XentResult softmax_xent(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* grad) {
  if (logits.rank() != 2) throw ShapeError("softmax_xent expects [M, K] logits");
  const std::size_t m = logits.dim(0), k = logits.dim(1);
  if (labels.size() != m) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(m) + " rows");
  }
  if (grad) *grad = Tensor<T>(logits.shape());
  XentResult r;
  if (m == 0) return r;
  std::vector<double> p(k);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("label " + std::to_string(y) + " outside 0.." + std::to_string(k - 1));
    }
    const T* row = logits.data() + i * k;
    double mx = row[0];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > mx) {
        mx = row[j];
        arg = j;
      }
    }
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (p[j] = std::exp(row[j] - mx));
    const double log_s = std::log(s);
    total += log_s - (row[y] - mx);
    r.correct += arg == static_cast<std::size_t>(y) ? 1 : 0;
    if (grad) {
      T* g = grad->data() + i * k;
      for (std::size_t j = 0; j < k; ++j) {
        g[j] = static_cast<T>((p[j] / s - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) /
                              static_cast<double>(m));
      }
    }
  }
  r.nll_mean = total / static_cast<double>(m);
  return r;
}

SgvbValue sgvb_objective(const SgvbLossParts& parts) {
  if (parts.m < 1 || parts.n < parts.m) {
    throw ConfigError("sgvb objective needs N >= M >= 1 (N=" + std::to_string(parts.n) +
                      ", M=" + std::to_string(parts.m) + ")");
  }
  SgvbValue v;
  for (const auto& t : parts.kl_terms) v.kl_total_scaled += t.scale * t.kl;
  v.loss = static_cast<double>(parts.n) * parts.nll_minibatch + v.kl_total_scaled;
  return v;
}

template <typename T>
SgvbStep sgvb_gradient(Network<T>& net, const Tensor<T>& x, const std::vector<int>& labels,
                       std::size_t dataset_size, const std::vector<double>& kl_scales,
                       std::uint64_t seed, std::uint64_t step, bool include_kl) {
  auto sbps = net.sbp_layers();
  const auto idx = net.sbp_indices();
  if (include_kl && kl_scales.size() != sbps.size()) {
    throw ConfigError("need one KL scale per SBP layer");
  }
  net.zero_grad();
  SgvbStep out;
  out.parts.n = dataset_size;
  out.parts.m = x.rank() ? x.dim(0) : 0;

  Tensor<T> logits = net.forward(x, Mode::kTrain, seed, step);
  Tensor<T> g;
  const XentResult xe = softmax_xent(logits, labels, &g);
  out.parts.nll_minibatch = xe.nll_mean;
  out.correct = xe.correct;
  const T n = static_cast<T>(dataset_size);
  for (auto& v : g.values()) v *= n;
  net.backward(g);

  if (include_kl) {
    std::vector<double> d_mu, d_ls;
    for (std::size_t l = 0; l < sbps.size(); ++l) {
      SbpLayer<T>& s = *sbps[l];
      const double scale = kl_scales[l];
      out.parts.kl_terms.push_back({idx[l], s.kl_sum(), scale});
      s.kl_grads(d_mu, d_ls);
      auto ps = s.params();
      for (std::size_t k = 0; k < s.groups(); ++k) {
        (*ps[0].grad)[k] += static_cast<T>(scale * d_mu[k]);
        (*ps[1].grad)[k] += static_cast<T>(scale * d_ls[k]);
      }
    }
  }
  out.value = sgvb_objective(out.parts);
  return out;
}

template XentResult softmax_xent<float>(const Tensor<float>&, const std::vector<int>&,
                                        Tensor<float>*);
template XentResult softmax_xent<double>(const Tensor<double>&, const std::vector<int>&,
                                         Tensor<double>*);
template SgvbStep sgvb_gradient<float>(Network<float>&, const Tensor<float>&,
                                       const std::vector<int>&, std::size_t,
                                       const std::vector<double>&, std::uint64_t,
                                       std::uint64_t, bool);
template SgvbStep sgvb_gradient<double>(Network<double>&, const Tensor<double>&,
                                        const std::vector<int>&, std::size_t,
                                        const std::vector<double>&, std::uint64_t,
                                        std::uint64_t, bool);

}  // namespace sbp
