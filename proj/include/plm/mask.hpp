#pragma once

#include <cstddef>
#include <vector>

#include "plm/error.hpp"
#include "plm/model.hpp"

namespace plm::net {

// Per-parameter-block trainable/frozen gates.  Frozen blocks receive zero
// gradient and are never touched by an update, so they stay bit-identical
// for as long as the mask says so.
struct TrainableMask {
  bool embedding = true;
  std::vector<bool> lstm_layers;
  bool surplus = true;  // ignored when the model has no surplus block
  bool output = true;

  bool trainable(const BlockRef& b) const {
    switch (b.kind) {
      case BlockKind::kEmbedding: return embedding;
      case BlockKind::kLstm: return lstm_layers.at(b.layer);
      case BlockKind::kSurplus: return surplus;
      case BlockKind::kOutput: return output;
    }
    return false;
  }

  bool any_trainable(bool has_surplus) const {
    if (embedding || output) return true;
    if (has_surplus && surplus) return true;
    for (bool b : lstm_layers)
      if (b) return true;
    return false;
  }
};

template <typename S>
TrainableMask make_mask(const ModelParams<S>& p, bool value) {
  TrainableMask m;
  m.embedding = m.surplus = m.output = value;
  m.lstm_layers.assign(p.lstm_layers.size(), value);
  return m;
}

template <typename S>
TrainableMask all_trainable(const ModelParams<S>& p) {
  return make_mask(p, true);
}

template <typename S>
TrainableMask all_frozen(const ModelParams<S>& p) {
  return make_mask(p, false);
}

template <typename S>
void check_mask(const TrainableMask& m, const ModelParams<S>& p) {
  if (m.lstm_layers.size() != p.lstm_layers.size())
    throw ShapeError("mask: lstm layer count does not match model");
}

// Zero the gradients of frozen blocks in place.
template <typename S>
void apply_mask(ModelParams<S>& grads, const TrainableMask& mask) {
  check_mask(mask, grads);
  visit_params(grads, [&](const BlockRef& b, std::span<S> t) {
    if (!mask.trainable(b)) fill(t, S(0));
  });
}

template <typename S>
std::size_t trainable_param_count(const ModelParams<S>& p, const TrainableMask& mask) {
  check_mask(mask, p);
  std::size_t n = 0;
  visit_params(p, [&](const BlockRef& b, std::span<const S> t) {
    if (mask.trainable(b)) n += t.size();
  });
  return n;
}

}  // namespace plm::net
