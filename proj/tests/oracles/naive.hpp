#pragma once

#include <optional>

#include "sbp/truncmath.hpp"

namespace sbp::oracle {

// Textbook closed forms for the truncated log-normal, evaluated directly with
// CDF differences and exp. No care is taken for cancellation or overflow; a
// result is returned only when every intermediate is a normal nonzero double.
struct NaiveMoments {
  double mean;
  double variance;
  double snr;
};

std::optional<NaiveMoments> naive_moments(const truncmath::TruncParams& p);

}  // namespace sbp::oracle
