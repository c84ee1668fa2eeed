#include "sbp/flops.hpp"

#include <algorithm>

#include "sbp/errors.hpp"

namespace sbp {

std::string kl_mode_name(KlMode m) { return m == KlMode::kScaled ? "scaled" : "plain"; }

KlMode kl_mode_from_name(const std::string& name) {
  if (name == "plain") return KlMode::kPlain;
  if (name == "scaled") return KlMode::kScaled;
  throw ConfigError("kl_mode must be 'plain' or 'scaled', got '" + name + "'");
}

template <typename T>
std::vector<double> kl_scales(const Network<T>& net, KlMode mode) {
  const auto idx = net.sbp_indices();
  if (mode == KlMode::kPlain) return std::vector<double>(idx.size(), 1.0);

  const auto shapes = net.shapes();
  auto is_weight = [&](std::size_t i) {
    const LayerKind k = net.layer(i).kind();
    return k == LayerKind::kDense || k == LayerKind::kConv2d;
  };
  std::vector<double> raw;
  for (std::size_t s : idx) {
    double f = 0.0;
    for (std::size_t i = s; i-- > 0;) {
      if (is_weight(i)) {
        f += static_cast<double>(net.layer(i).flops(shapes[i]));
        break;
      }
    }
    for (std::size_t i = s + 1; i < net.size(); ++i) {
      if (is_weight(i)) {
        f += static_cast<double>(net.layer(i).flops(shapes[i]));
        break;
      }
    }
    raw.push_back(f);
  }
  const double mx = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  // A layer with no adjacent weight layer keeps the plain weight.
  for (auto& r : raw) r = mx > 0 && r > 0 ? r / mx : 1.0;
  return raw;
}

template std::vector<double> kl_scales<float>(const Network<float>&, KlMode);
template std::vector<double> kl_scales<double>(const Network<double>&, KlMode);

}  // namespace sbp
