#pragma once

#include <string>

#include "sbp/network.hpp"

namespace sbp {

inline constexpr int kCheckpointVersion = 1;

// File layout: "SBP1", u32 little-endian header length, UTF-8 JSON header
// (network spec plus an array manifest with byte offsets, lengths and shapes),
// then little-endian float32 payload in manifest order.
std::string serialize_checkpoint(const Network<float>& net);
Network<float> deserialize_checkpoint(const std::string& bytes);

// Writes through a temporary file and renames, so an existing checkpoint is
// never left half-written.
void save_checkpoint(const Network<float>& net, const std::string& path);
Network<float> load_checkpoint(const std::string& path);

}  // namespace sbp
