#pragma once

#include <cstdint>
#include <vector>

#include "sbp/network.hpp"

namespace sbp {

struct XentResult {
  double nll_mean = 0.0;
  std::size_t correct = 0;
};

// Mean softmax cross-entropy over the batch. When grad is non-null it receives
// d(mean NLL)/d(logits).
template <typename T>
XentResult softmax_xent(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* grad = nullptr);

struct KlTerm {
  std::size_t layer = 0;
  double kl = 0.0;
  double scale = 1.0;
};

struct SgvbLossParts {
  double nll_minibatch = 0.0;  // mean over the minibatch
  std::size_t n = 0;           // dataset size
  std::size_t m = 0;           // minibatch size
  std::vector<KlTerm> kl_terms;
};

struct SgvbValue {
  double loss = 0.0;             // N * nll + sum scale * kl
  double kl_total_scaled = 0.0;
};

SgvbValue sgvb_objective(const SgvbLossParts& parts);

struct SgvbStep {
  SgvbLossParts parts;
  SgvbValue value;
  std::size_t correct = 0;
};

// One stochastic evaluation of the minimization objective. Zeroes and then
// fills every parameter gradient of net with d loss / d param. kl_scales has
// one entry per SBP layer; with include_kl false the KL terms are dropped.
template <typename T>
SgvbStep sgvb_gradient(Network<T>& net, const Tensor<T>& x, const std::vector<int>& labels,
                       std::size_t dataset_size, const std::vector<double>& kl_scales,
                       std::uint64_t seed, std::uint64_t step, bool include_kl = true);

}  // namespace sbp
