#pragma once

#include <cmath>
#include <span>
#include <string>

#include "plm/mask.hpp"
#include "plm/model.hpp"

namespace plm::net {

// Global L2 norm across every tensor of the gradient store.
template <typename S>
double gradient_norm(const ModelParams<S>& grads) {
  double sq = 0.0;
  visit_params(grads, [&](const BlockRef&, std::span<const S> t) { sq += squared_norm<S>(t); });
  return std::sqrt(sq);
}

// In-place SGD update with global gradient-norm clipping; frozen blocks are
// not touched at all.  Returns the pre-clip norm.  Any non-finite gradient or
// resulting parameter raises NumericError naming the offending block.
template <typename S>
double sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, double lr, double clip,
                const TrainableMask& mask) {
  if (lr <= 0.0) throw ConfigError("sgd: learning rate must be positive");
  if (clip <= 0.0) throw ConfigError("sgd: clip threshold must be positive");
  check_mask(mask, params);
  visit_params(grads, [&](const BlockRef& b, std::span<const S> t) {
    if (!all_finite<S>(t)) throw NumericError("sgd: non-finite gradient in " + block_name(b));
  });
  const double norm = gradient_norm(grads);
  const double scale = norm > clip ? clip / norm : 1.0;
  const S step = static_cast<S>(lr * scale);

  auto spans_p = collect_spans(params);
  auto spans_g = collect_spans(grads);
  for (std::size_t i = 0; i < spans_p.size(); ++i) {
    if (!mask.trainable(spans_p[i].first)) continue;
    auto dst = spans_p[i].second;
    auto src = spans_g[i].second;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= step * src[j];
    if (!all_finite<S>(std::span<const S>(dst)))
      throw NumericError("sgd: non-finite parameter in " + block_name(spans_p[i].first));
  }
  return norm;
}

template <typename S>
double sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, double lr, double clip) {
  return sgd_step(params, grads, lr, clip, all_trainable(params));
}

}  // namespace plm::net
