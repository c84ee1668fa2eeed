#pragma once

#include "sbp/network.hpp"

namespace sbp {

// Physically removes pruned groups. Each SBP layer's evaluation scale
// (E[theta] for kept groups, 0 for pruned ones) is folded into the next
// weight layer, SBP layers are dropped, output units of the preceding weight
// layer whose every downstream feature is dead are deleted, and any dead
// features left over are skipped with a select layer. The result computes the
// same function as the masked network in evaluation mode.
//
// Throws UnsupportedPatternError when an SBP layer has no following weight
// layer, or when its groups are not whole channels but must pass through a
// convolution or pooling layer.
template <typename T>
Network<T> compact(const Network<T>& net);

}  // namespace sbp
