#pragma once

#include <map>
#include <string>
#include <vector>

#include "sbp/layer.hpp"

namespace sbp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Learning rate for SBP mu / log sigma; 0 means use lr.
  double sbp_lr = 0.0;
};

// Adam with bias correction. Moments are kept in double and keyed by
// parameter name, so the parameter list may change between steps (e.g.
// pretraining excludes the SBP parameters). SBP parameters are clamped to
// their box after every update.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {});

  // Throws NumericError without touching anything if a gradient is not finite.
  void step(const std::vector<ParamRef<T>>& params);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace sbp
