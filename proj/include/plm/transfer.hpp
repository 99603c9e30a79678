#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "plm/checkpoint.hpp"
#include "plm/train.hpp"

namespace plm::transfer {

enum class SchemeKind { kRelearnWhole, kSurplusLayer, kFixedFirstN };

struct SchemeSpec {
  SchemeKind kind = SchemeKind::kRelearnWhole;
  net::SurplusKind surplus_kind = net::SurplusKind::kAffine;  // for kSurplusLayer
  std::size_t fixed_n = 0;                                    // for kFixedFirstN

  static SchemeSpec relearn_whole() { return {SchemeKind::kRelearnWhole, net::SurplusKind::kAffine, 0}; }
  static SchemeSpec surplus_layer(net::SurplusKind k = net::SurplusKind::kAffine) {
    return {SchemeKind::kSurplusLayer, k, 0};
  }
  static SchemeSpec fixed_first_n(std::size_t n) {
    return {SchemeKind::kFixedFirstN, net::SurplusKind::kAffine, n};
  }
};

inline std::string scheme_name(const SchemeSpec& s) {
  switch (s.kind) {
    case SchemeKind::kRelearnWhole: return "relearn";
    case SchemeKind::kSurplusLayer:
      return s.surplus_kind == net::SurplusKind::kAffine ? "surplus" : "surplus-lstm";
    case SchemeKind::kFixedFirstN: return "fixed-" + std::to_string(s.fixed_n);
  }
  return "?";
}

// Frozen/trainable assignment for each scheme.
template <typename S>
net::TrainableMask derive_mask(const SchemeSpec& scheme, const net::ModelParams<S>& p) {
  switch (scheme.kind) {
    case SchemeKind::kRelearnWhole:
      return net::all_trainable(p);
    case SchemeKind::kSurplusLayer: {
      if (!p.has_surplus())
        throw ConfigError("derive_mask: surplus scheme requires a surplus block");
      net::TrainableMask m = net::all_frozen(p);
      m.surplus = true;
      return m;
    }
    case SchemeKind::kFixedFirstN: {
      const std::size_t layers = p.lstm_layers.size();
      if (scheme.fixed_n == 0 || scheme.fixed_n >= layers)
        throw ConfigError("derive_mask: fixed-n must satisfy 0 < n < " + std::to_string(layers));
      net::TrainableMask m = net::all_trainable(p);
      for (std::size_t i = 0; i < scheme.fixed_n; ++i) m.lstm_layers[i] = false;
      return m;
    }
  }
  throw ConfigError("derive_mask: unknown scheme");
}

// Checkpoint surgery: add the bridge block between the top LSTM layer and the
// output projection.  The affine kind starts as the exact identity map, so
// the grafted model's outputs are unchanged until training moves it.
template <typename S>
net::ModelParams<S> insert_surplus(const net::ModelParams<S>& model, net::SurplusKind kind,
                                   std::uint64_t seed = 0) {
  if (model.has_surplus()) throw ConfigError("insert_surplus: surplus already present");
  net::ModelParams<S> out = model;
  const std::size_t h = model.lstm_layers.back().hidden();
  if (kind == net::SurplusKind::kAffine) {
    net::AffineSurplus<S> a;
    a.weight = net::Matrix<S>::identity(h);
    a.bias = net::Vector<S>(h, S(0));
    out.surplus = net::SurplusVariant<S>(std::move(a));
  } else {
    net::LstmLayerParams<S> layer;
    layer.w_input = net::Matrix<S>(4 * h, h);
    layer.w_recurrent = net::Matrix<S>(4 * h, h);
    layer.bias = net::Vector<S>(4 * h, S(0));
    Rng rng(seed);
    for (auto* m : {&layer.w_input, &layer.w_recurrent})
      for (auto& v : m->flat()) v = static_cast<S>(rng.uniform(-0.08, 0.08));
    for (std::size_t i = h; i < 2 * h; ++i) layer.bias[i] = S(1);  // forget gate
    out.surplus = net::SurplusVariant<S>(std::move(layer));
  }
  return out;
}

template <typename S>
struct FinetuneResult {
  io::Checkpoint<S> checkpoint;
  std::vector<net::EpochMetrics> trace;
};

// Scale a pretraining config down to the fine-tune default rate.
inline net::TrainConfig finetune_config(net::TrainConfig cfg) {
  cfg.lr *= 0.1;
  return cfg;
}

// Graft (if the scheme needs it), derive the mask, train.  `data_fingerprint`
// is the fingerprint of the vocabulary the samples were encoded with; pass 0
// to skip the check (already-verified callers).
template <typename S>
FinetuneResult<S> finetune(const io::Checkpoint<S>& general, const std::vector<net::Sample>& data,
                           const std::vector<net::Sample>& validation, const SchemeSpec& scheme,
                           const net::TrainConfig& cfg, std::uint64_t data_fingerprint = 0) {
  if (data.empty()) throw ConfigError("finetune: empty personal dataset");
  if (data_fingerprint != 0 && data_fingerprint != general.vocab_fingerprint)
    throw DataError("finetune: vocabulary fingerprint mismatch with checkpoint");

  FinetuneResult<S> out;
  out.checkpoint = general;
  auto& p = out.checkpoint.params;
  if (scheme.kind == SchemeKind::kSurplusLayer && !p.has_surplus())
    p = insert_surplus(p, scheme.surplus_kind, cfg.seed);
  const net::TrainableMask mask = derive_mask(scheme, p);
  out.trace = net::train(p, data, validation, cfg, mask);
  out.checkpoint.epochs_completed += cfg.epochs;
  out.checkpoint.lineage.push_back("finetune scheme=" + scheme_name(scheme) +
                                   " epochs=" + std::to_string(cfg.epochs) +
                                   " seed=" + std::to_string(cfg.seed));
  return out;
}

// Convenience form that carves the validation split out of `data` itself.
template <typename S>
FinetuneResult<S> finetune(const io::Checkpoint<S>& general, const std::vector<net::Sample>& data,
                           const SchemeSpec& scheme, const net::TrainConfig& cfg,
                           std::uint64_t data_fingerprint = 0) {
  auto [train_part, val_part] = net::split_samples(data, cfg.validation_fraction, cfg.seed);
  return finetune(general, train_part, val_part, scheme, cfg, data_fingerprint);
}

struct SweepRow {
  std::size_t size = 0;
  double perplexity = 0.0;
  std::vector<net::EpochMetrics> trace;
};

// Fine-tune fresh copies on seeded nested subsamples of the training pool,
// all scored on one shared validation split.  Size 0 reports the untouched
// general model.  Subsample indices are sorted back to pool order, so the
// full-size row reproduces a direct finetune call bit for bit.
template <typename S>
std::vector<SweepRow> data_size_sweep(const io::Checkpoint<S>& general,
                                      const std::vector<net::Sample>& data,
                                      const std::vector<std::size_t>& sizes,
                                      const SchemeSpec& scheme, const net::TrainConfig& cfg,
                                      std::uint64_t data_fingerprint = 0) {
  if (sizes.empty()) throw ConfigError("size sweep: no sizes given");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("size sweep: sizes must be strictly ascending");

  auto [pool, val] = net::split_samples(data, cfg.validation_fraction, cfg.seed);
  if (sizes.back() > pool.size())
    throw ConfigError("size sweep: size " + std::to_string(sizes.back()) +
                      " exceeds training pool of " + std::to_string(pool.size()));

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(cfg.seed).fork(0x5132);
  rng.shuffle(order);

  std::vector<SweepRow> rows;
  for (std::size_t size : sizes) {
    SweepRow row;
    row.size = size;
    if (size == 0) {
      row.perplexity = net::perplexity(general.params, val);
    } else {
      std::vector<std::size_t> pick(order.begin(), order.begin() + size);
      std::sort(pick.begin(), pick.end());
      std::vector<net::Sample> subset;
      subset.reserve(size);
      for (auto i : pick) subset.push_back(pool[i]);
      auto res = finetune(general, subset, val, scheme, cfg, data_fingerprint);
      row.trace = std::move(res.trace);
      row.perplexity = row.trace.empty() ? net::perplexity(general.params, val)
                                         : row.trace.back().val_ppl;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace plm::transfer
