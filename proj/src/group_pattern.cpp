#include "sbp/group_pattern.hpp"

#include <algorithm>

#include "sbp/errors.hpp"

namespace sbp {

GroupPattern::GroupPattern(Kind kind, Shape input_shape,
                           std::vector<std::uint32_t> group_of)
    : kind_(kind), input_shape_(std::move(input_shape)), group_of_(std::move(group_of)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeError("group pattern needs a non-empty input shape, got " +
                     shape_str(input_shape_));
  }
  if (group_of_.size() != shape_size(input_shape_)) {
    throw ShapeError("group map covers " + std::to_string(group_of_.size()) +
                     " features but shape " + shape_str(input_shape_) + " has " +
                     std::to_string(shape_size(input_shape_)));
  }
  const std::uint32_t max_g = *std::max_element(group_of_.begin(), group_of_.end());
  groups_ = static_cast<std::size_t>(max_g) + 1;
  std::vector<bool> seen(groups_, false);
  for (auto g : group_of_) seen[g] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ShapeError("group map is not surjective onto 0.." + std::to_string(max_g));
  }
}

GroupPattern GroupPattern::per_feature(Shape input_shape) {
  std::vector<std::uint32_t> map(shape_size(input_shape));
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<std::uint32_t>(i);
  return GroupPattern(Kind::kPerFeature, std::move(input_shape), std::move(map));
}

GroupPattern GroupPattern::per_channel(Shape input_shape) {
  if (input_shape.empty()) throw ShapeError("per_channel pattern needs a shape");
  const std::size_t c = input_shape.back();
  std::vector<std::uint32_t> map(shape_size(input_shape));
  for (std::size_t i = 0; i < map.size(); ++i) {
    map[i] = static_cast<std::uint32_t>(i % c);
  }
  return GroupPattern(Kind::kPerChannel, std::move(input_shape), std::move(map));
}

GroupPattern GroupPattern::custom(Shape input_shape, std::vector<std::uint32_t> group_of) {
  if (group_of.empty()) throw ShapeError("custom group map is empty");
  return GroupPattern(Kind::kCustom, std::move(input_shape), std::move(group_of));
}

bool GroupPattern::channel_aligned() const {
  const std::size_t c = input_shape_.back();
  for (std::size_t i = 0; i < group_of_.size(); ++i) {
    if (group_of_[i] != group_of_[i % c]) return false;
  }
  return true;
}

std::string GroupPattern::kind_name(Kind k) {
  switch (k) {
    case Kind::kPerFeature: return "per_feature";
    case Kind::kPerChannel: return "per_channel";
    case Kind::kCustom: return "custom";
  }
  return "custom";
}

GroupPattern::Kind GroupPattern::kind_from_name(const std::string& name) {
  if (name == "per_feature") return Kind::kPerFeature;
  if (name == "per_channel") return Kind::kPerChannel;
  if (name == "custom") return Kind::kCustom;
  throw ConfigError("unknown group pattern '" + name +
                    "' (expected per_feature, per_channel or custom)");
}

}  // namespace sbp
