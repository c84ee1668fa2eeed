#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sbp/tensor.hpp"

namespace sbp {

// Assignment of per-example features (flat index over input_shape) to shared
// noise groups.
class GroupPattern {
 public:
  enum class Kind { kPerFeature, kPerChannel, kCustom };

  GroupPattern() = default;

  // One group per feature.
  static GroupPattern per_feature(Shape input_shape);
  // One group per entry of the last axis (channels of an H x W x C map).
  static GroupPattern per_channel(Shape input_shape);
  // Any surjective map onto 0..G-1.
  static GroupPattern custom(Shape input_shape, std::vector<std::uint32_t> group_of);

  Kind kind() const { return kind_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t features() const { return group_of_.size(); }
  std::size_t groups() const { return groups_; }
  std::uint32_t group_of(std::size_t feature) const { return group_of_[feature]; }
  const std::vector<std::uint32_t>& group_map() const { return group_of_; }

  // True when every group is a set of whole channels, i.e. the group of a
  // feature depends only on its last-axis index.
  bool channel_aligned() const;

  static std::string kind_name(Kind k);
  static Kind kind_from_name(const std::string& name);

 private:
  GroupPattern(Kind kind, Shape input_shape, std::vector<std::uint32_t> group_of);

  Kind kind_ = Kind::kPerFeature;
  Shape input_shape_;
  std::vector<std::uint32_t> group_of_;
  std::size_t groups_ = 0;
};

}  // namespace sbp
