#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "plm/gradients.hpp"
#include "plm/rng.hpp"
#include "plm/sgd.hpp"

namespace plm::net {

struct TrainConfig {
  double lr = 0.5;
  double lr_decay = 0.8;          // multiplicative, applied per epoch past lr_decay_start
  std::size_t lr_decay_start = 6; // last epoch that still uses the base rate
  double clip = 5.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t bptt_cap = 64;
  std::uint64_t seed = 1;
  int precision = 64;  // 32 or 64; consulted by the CLI when instantiating
  double validation_fraction = 0.1;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("train: lr_decay must be in (0, 1]");
    if (clip <= 0.0) throw ConfigError("train: clip must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (bptt_cap == 0) throw ConfigError("train: bptt_cap must be >= 1");
    if (precision != 32 && precision != 64) throw ConfigError("train: precision must be 32 or 64");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
      throw ConfigError("train: validation_fraction must be in (0, 1)");
  }

  double lr_at(std::size_t epoch /*1-based*/) const {
    if (epoch <= lr_decay_start) return lr;
    return lr * std::pow(lr_decay, static_cast<double>(epoch - lr_decay_start));
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;
  double train_ppl = 0.0;
  double val_nll = std::numeric_limits<double>::quiet_NaN();
  double val_ppl = std::numeric_limits<double>::quiet_NaN();
};

// exp(token-weighted mean NLL) over the samples.
template <typename S>
double perplexity(const ModelParams<S>& p, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ConfigError("perplexity: empty dataset");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : samples) {
    nll += sample_nll_sum(p, s);
    tokens += s.loss_tokens();
  }
  return std::exp(nll / static_cast<double>(tokens));
}

// Seeded split into (train, validation).  The validation share is rounded to
// the nearest count but kept within [1, n-1] so both sides stay non-empty.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_samples(
    const std::vector<Sample>& samples, double fraction, std::uint64_t seed) {
  if (samples.size() < 2) throw ConfigError("split: need at least two samples");
  if (fraction <= 0.0 || fraction >= 1.0) throw ConfigError("split: fraction must be in (0, 1)");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(samples.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, samples.size() - 1);
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? out.second : out.first).push_back(samples[order[i]]);
  return out;
}

// SGD over seeded shuffled epochs.  Gradients are accumulated over each
// mini-batch (token-weighted) before a single clipped update; frozen blocks
// are never written.  Returns one metrics row per epoch.
//
// `first_epoch` shifts the epoch clock (shuffles, lr decay) so a run split
// into segments matches the same run done in one call.
template <typename S>
std::vector<EpochMetrics> train(ModelParams<S>& p, const std::vector<Sample>& train_samples,
                                const std::vector<Sample>& val_samples, const TrainConfig& cfg,
                                const TrainableMask& mask, std::size_t first_epoch = 1) {
  cfg.validate();
  check_mask(mask, p);
  if (train_samples.empty()) throw ConfigError("train: empty dataset");
  if (first_epoch == 0) throw ConfigError("train: epochs are 1-based");

  std::vector<EpochMetrics> trace;
  std::vector<std::size_t> order(train_samples.size());
  Rng master(cfg.seed);

  ModelParams<S> grads = zeros_like(p);
  for (std::size_t epoch = first_epoch; epoch < first_epoch + cfg.epochs; ++epoch) {
    // The permutation depends only on (seed, epoch) so a run split into
    // segments visits samples exactly like the same run done in one call.
    std::iota(order.begin(), order.end(), 0);
    Rng erng = master.fork(epoch);
    erng.shuffle(order);
    const double lr = cfg.lr_at(epoch);

    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    std::size_t pos = 0;
    std::size_t step = 0;
    while (pos < order.size()) {
      const std::size_t take = std::min(cfg.batch_size, order.size() - pos);
      set_zero(grads);
      detail::WindowStats batch;
      for (std::size_t k = 0; k < take; ++k) {
        const auto w =
            detail::accumulate_sample_gradients(p, train_samples[order[pos + k]], cfg.bptt_cap, grads);
        batch.nll_sum += w.nll_sum;
        batch.tokens += w.tokens;
      }
      const S inv = S(1) / static_cast<S>(batch.tokens);
      visit_params(grads, [&](const BlockRef&, std::span<S> t) {
        for (auto& v : t) v *= inv;
      });
      apply_mask(grads, mask);
      if (!std::isfinite(batch.nll_sum))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      try {
        if (mask.any_trainable(p.has_surplus())) sgd_step(p, grads, lr, cfg.clip, mask);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ")");
      }
      epoch_nll += batch.nll_sum;
      epoch_tokens += batch.tokens;
      pos += take;
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_nll = epoch_nll / static_cast<double>(epoch_tokens);
    m.train_ppl = std::exp(m.train_nll);
    if (!val_samples.empty()) {
      m.val_ppl = perplexity(p, val_samples);
      m.val_nll = std::log(m.val_ppl);
    }
    trace.push_back(m);
  }
  return trace;
}

}  // namespace plm::net
