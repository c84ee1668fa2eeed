#include "sbp/compact.hpp"

#include "sbp/errors.hpp"
#include "sbp/layers.hpp"

namespace sbp {
namespace {

bool is_weight(LayerKind k) { return k == LayerKind::kDense || k == LayerKind::kConv2d; }

// Scales that depend only on the last-axis index, reduced to one per channel.
std::vector<double> per_channel(const std::vector<double>& s, std::size_t channels,
                                const char* where) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != s[i % channels]) {
      throw UnsupportedPatternError(std::string("SBP groups are not whole channels but feed ") +
                                    where);
    }
  }
  return std::vector<double>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(channels));
}

template <typename T>
struct Item {
  std::unique_ptr<Layer<T>> layer;
  // Weight layers only: input features (dense) or channels (conv) whose
  // folded scale is zero. Empty when nothing was folded in.
  std::vector<bool> dead;
};

template <typename T>
std::unique_ptr<DenseLayer<T>> dense_subset(const DenseLayer<T>& d,
                                            const std::vector<std::size_t>& rows,
                                            const std::vector<std::size_t>& cols) {
  auto out = std::make_unique<DenseLayer<T>>(rows.size(), cols.size());
  const std::size_t n_out = d.out();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out->weight()[i * cols.size() + j] = d.weight()[rows[i] * n_out + cols[j]];
    }
  }
  for (std::size_t j = 0; j < cols.size(); ++j) out->bias()[j] = d.bias()[cols[j]];
  return out;
}

template <typename T>
std::unique_ptr<Conv2dLayer<T>> conv_subset(const Conv2dLayer<T>& c,
                                            const std::vector<std::size_t>& in_ch,
                                            const std::vector<std::size_t>& out_ch) {
  auto g = c.geometry();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  g.in_channels = in_ch.size();
  g.out_channels = out_ch.size();
  auto out = std::make_unique<Conv2dLayer<T>>(g);
  for (std::size_t k = 0; k < g.kernel_h * g.kernel_w; ++k) {
    for (std::size_t i = 0; i < in_ch.size(); ++i) {
      for (std::size_t j = 0; j < out_ch.size(); ++j) {
        out->weight()[(k * in_ch.size() + i) * out_ch.size() + j] =
            c.weight()[(k * cin + in_ch[i]) * cout + out_ch[j]];
      }
    }
  }
  for (std::size_t j = 0; j < out_ch.size(); ++j) out->bias()[j] = c.bias()[out_ch[j]];
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

template <typename T>
std::size_t input_units(const Layer<T>& l) {
  if (l.kind() == LayerKind::kDense) return static_cast<const DenseLayer<T>&>(l).in();
  return static_cast<const Conv2dLayer<T>&>(l).geometry().in_channels;
}

template <typename T>
std::size_t output_units(const Layer<T>& l) {
  if (l.kind() == LayerKind::kDense) return static_cast<const DenseLayer<T>&>(l).out();
  return static_cast<const Conv2dLayer<T>&>(l).geometry().out_channels;
}

// Restricts a weight layer to the given input and output units.
template <typename T>
std::unique_ptr<Layer<T>> restrict(const Layer<T>& l, const std::vector<std::size_t>& in,
                                   const std::vector<std::size_t>& out) {
  if (l.kind() == LayerKind::kDense) {
    return dense_subset(static_cast<const DenseLayer<T>&>(l), in, out);
  }
  return conv_subset(static_cast<const Conv2dLayer<T>&>(l), in, out);
}

// Multiplies the scales of the consumer's inputs into its weights.
template <typename T>
std::vector<bool> fold(Layer<T>& l, const std::vector<double>& pending) {
  std::vector<bool> dead;
  if (l.kind() == LayerKind::kDense) {
    auto& d = static_cast<DenseLayer<T>&>(l);
    dead.resize(d.in());
    for (std::size_t i = 0; i < d.in(); ++i) {
      for (std::size_t o = 0; o < d.out(); ++o) {
        T& w = d.weight()[i * d.out() + o];
        w = static_cast<T>(static_cast<double>(w) * pending[i]);
      }
      dead[i] = pending[i] == 0.0;
    }
    return dead;
  }
  auto& c = static_cast<Conv2dLayer<T>&>(l);
  const auto& g = c.geometry();
  const std::vector<double> s = per_channel(pending, g.in_channels, "a convolution");
  dead.resize(g.in_channels);
  for (std::size_t k = 0; k < g.kernel_h * g.kernel_w; ++k) {
    for (std::size_t i = 0; i < g.in_channels; ++i) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        T& w = c.weight()[(k * g.in_channels + i) * g.out_channels + o];
        w = static_cast<T>(static_cast<double>(w) * s[i]);
      }
    }
  }
  for (std::size_t i = 0; i < g.in_channels; ++i) dead[i] = s[i] == 0.0;
  return dead;
}

}  // namespace

template <typename T>
Network<T> compact(const Network<T>& net) {
  const auto shapes = net.shapes();

  // Fold evaluation scales forward into the next weight layer.
  std::vector<Item<T>> items;
  std::vector<double> pending;  // per feature of the current activation
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer<T>& l = net.layer(i);
    const Shape& in = shapes[i];
    switch (l.kind()) {
      case LayerKind::kSbp: {
        const auto& s = static_cast<const SbpLayer<T>&>(l);
        const std::vector<double> sc = s.eval_scales();
        if (pending.empty()) pending.assign(shape_size(in), 1.0);
        for (std::size_t f = 0; f < pending.size(); ++f) pending[f] *= sc[s.pattern().group_of(f)];
        continue;
      }
      case LayerKind::kRelu:
      case LayerKind::kFlatten:
        // Scales are >= 0 and commute with ReLU; flatten keeps feature order.
        break;
      case LayerKind::kMaxPool2d:
        if (!pending.empty()) {
          const std::vector<double> s = per_channel(pending, in.back(), "a pooling layer");
          pending.resize(shape_size(shapes[i + 1]));
          for (std::size_t f = 0; f < pending.size(); ++f) pending[f] = s[f % s.size()];
        }
        break;
      case LayerKind::kSelect:
        if (!pending.empty()) {
          const auto& sel = static_cast<const SelectLayer<T>&>(l);
          const std::size_t k = sel.indices().size();
          std::vector<double> next(shape_size(shapes[i + 1]));
          for (std::size_t f = 0; f < next.size(); ++f) {
            next[f] = pending[(f / k) * sel.in() + sel.indices()[f % k]];
          }
          pending = std::move(next);
        }
        break;
      case LayerKind::kDense:
      case LayerKind::kConv2d: {
        Item<T> it{l.clone(), {}};
        if (!pending.empty()) it.dead = fold(*it.layer, pending);
        pending.clear();
        items.push_back(std::move(it));
        continue;
      }
    }
    items.push_back({l.clone(), {}});
  }
  if (!pending.empty()) {
    throw UnsupportedPatternError("an SBP layer has no weight layer after it to fold into");
  }

  // Delete dead units, then skip whatever dead inputs remain.
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (!is_weight(items[j].layer->kind()) || items[j].dead.empty()) continue;
    std::vector<bool> dead = items[j].dead;

    std::size_t p = j;
    while (p > 0) {
      const LayerKind k = items[p - 1].layer->kind();
      if (k != LayerKind::kRelu && k != LayerKind::kFlatten && k != LayerKind::kMaxPool2d) break;
      --p;
    }
    const bool has_producer = p > 0 && is_weight(items[p - 1].layer->kind());

    if (has_producer) {
      Layer<T>& prod = *items[p - 1].layer;
      const std::size_t units = output_units(prod);
      std::vector<bool> removable(units, true);
      for (std::size_t f = 0; f < dead.size(); ++f) {
        if (!dead[f]) removable[f % units] = false;
      }
      std::vector<std::size_t> keep_units, keep_in;
      for (std::size_t u = 0; u < units; ++u) {
        if (!removable[u]) keep_units.push_back(u);
      }
      if (keep_units.size() < units) {
        std::vector<bool> kept_dead;
        for (std::size_t f = 0; f < dead.size(); ++f) {
          if (!removable[f % units]) {
            keep_in.push_back(f);
            kept_dead.push_back(dead[f]);
          }
        }
        items[p - 1].layer = restrict(prod, iota(input_units(prod)), keep_units);
        items[j].layer = restrict(*items[j].layer, keep_in, iota(output_units(*items[j].layer)));
        dead = std::move(kept_dead);
      }
    }

    std::vector<std::size_t> live;
    for (std::size_t f = 0; f < dead.size(); ++f) {
      if (!dead[f]) live.push_back(f);
    }
    if (live.size() < dead.size()) {
      items[j].layer = restrict(*items[j].layer, live, iota(output_units(*items[j].layer)));
      items.insert(items.begin() + static_cast<std::ptrdiff_t>(j),
                   Item<T>{std::make_unique<SelectLayer<T>>(dead.size(), live), {}});
      ++j;
    }
    items[j].dead.clear();
  }

  Network<T> out(net.input_shape());
  for (auto& it : items) out.add(std::move(it.layer));
  return out;
}

template Network<float> compact<float>(const Network<float>&);
template Network<double> compact<double>(const Network<double>&);

}  // namespace sbp
