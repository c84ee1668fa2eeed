#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sbp/network.hpp"

namespace sbp {

// Counting convention: dense 2*I*O, conv 2*Hout*Wout*Cin*Cout*kh*kw, one op
// per output element for pooling and ReLU, nothing for SBP, flatten, select.
template <typename T>
std::int64_t count_flops(const Network<T>& net) {
  return net.flops();
}

enum class KlMode { kPlain, kScaled };

std::string kl_mode_name(KlMode m);
KlMode kl_mode_from_name(const std::string& name);

// One KL weight per SBP layer. Plain mode gives 1 everywhere. Scaled mode
// weights each layer by the FLOPs of the weight layers adjacent to it
// (nearest before and after), normalized so the largest weight is 1.
template <typename T>
std::vector<double> kl_scales(const Network<T>& net, KlMode mode);

}  // namespace sbp
