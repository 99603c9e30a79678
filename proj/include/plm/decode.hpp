#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "plm/models.hpp"
#include "plm/rng.hpp"

namespace plm::models {

enum class DecodeMode { kGreedy, kSampled };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  std::size_t max_len = 64;
  std::uint64_t seed = 1;

  void validate() const {
    if (max_len == 0) throw ConfigError("decode: max_len must be >= 1");
    if (temperature <= 0.0) throw ConfigError("decode: temperature must be positive");
  }
};

namespace detail {

// Sampling stream for one decode call: seeded from the config but salted with
// the conditioning words, so each input gets its own stream (a shared stream
// would make every generation in a batch pick the same tokens) while the call
// stays a pure function of (params, input, config).
inline Rng decode_rng(const DecodeConfig& cfg, const std::vector<std::int32_t>& words) {
  return Rng(cfg.seed).fork(fnv1a(words.data(), words.size() * sizeof(std::int32_t)));
}

inline std::size_t pick(const DecodeConfig& cfg, const std::vector<double>& probs, Rng& rng) {
  if (cfg.mode == DecodeMode::kGreedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    return best;
  }
  // Temperature reshaping on the probability vector, then inverse CDF.
  std::vector<double> w(probs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    w[i] = std::pow(probs[i], 1.0 / cfg.temperature);
    z += w[i];
  }
  double u = rng.next_unit() * z;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u <= 0.0) return i;
  }
  return w.size() - 1;
}

// Run the decode loop from an already-primed state whose last fed token was
// `last`.  Appends generated ids (eos-terminated unless max_len hit).
template <typename S>
corpus::TokenSequence decode_from(const net::ModelParams<S>& p, net::LstmState<S>& state,
                                  std::int32_t last, const DecodeConfig& cfg, Rng& rng) {
  corpus::TokenSequence out;
  std::vector<double> probs;
  net::Vector<S> row;
  std::int32_t cur = last;
  for (std::size_t n = 0; n < cfg.max_len; ++n) {
    net::forward_step(p, cur, state, row);
    probs.assign(row.begin(), row.end());
    const auto id = static_cast<std::int32_t>(pick(cfg, probs, rng));
    out.ids.push_back(id);
    if (id == corpus::Vocabulary::kEosId) {
      out.terminated = true;
      break;
    }
    cur = id;
  }
  return out;
}

}  // namespace detail

// Feed the prefix (eos start token first), then extend until eos or max_len.
// Returns prefix + continuation; the continuation includes the closing eos
// when reached.
template <typename S>
corpus::TokenSequence complete_sentence(const SentenceCompletionModel<S>& model,
                                        const corpus::TokenSequence& prefix,
                                        const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<std::int32_t> words = prefix.ids;
  while (!words.empty() && words.back() == corpus::Vocabulary::kEosId) words.pop_back();
  if (words.empty()) throw DataError("complete_sentence: empty prefix");
  const auto& p = model.params;
  net::LstmState<S> state = net::init_state(p);
  net::Vector<S> row;
  net::forward_step(p, corpus::Vocabulary::kEosId, state, row);  // start token
  for (std::size_t i = 0; i + 1 < words.size(); ++i) net::forward_step(p, words[i], state, row);

  Rng rng = detail::decode_rng(cfg, words);
  corpus::TokenSequence gen = detail::decode_from(p, state, words.back(), cfg, rng);
  corpus::TokenSequence out;
  out.ids = std::move(words);
  out.ids.insert(out.ids.end(), gen.ids.begin(), gen.ids.end());
  out.terminated = gen.terminated;
  return out;
}

// Encode message + border eos (capturing the context state), then decode the
// reply.  Only the message side of the pair is ever read.
template <typename S>
corpus::TokenSequence predict_reply(const MessageReplyModel<S>& model,
                                    const corpus::TokenSequence& message,
                                    const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<std::int32_t> words = message.ids;
  while (!words.empty() && words.back() == corpus::Vocabulary::kEosId) words.pop_back();
  if (words.empty()) throw DataError("predict_reply: empty message");
  const auto& p = model.params;
  net::LstmState<S> state = net::init_state(p);
  net::Vector<S> row;
  for (auto id : words) net::forward_step(p, id, state, row);
  // the border eos is the first token the decode loop feeds; the state after
  // it is the message context
  Rng rng = detail::decode_rng(cfg, words);
  return detail::decode_from(p, state, corpus::Vocabulary::kEosId, cfg, rng);
}

template <typename S>
std::vector<corpus::TokenSequence> batch_generate(const MessageReplyModel<S>& model,
                                                  const std::vector<corpus::TokenSequence>& messages,
                                                  const DecodeConfig& cfg) {
  std::vector<corpus::TokenSequence> out;
  out.reserve(messages.size());
  for (const auto& m : messages) out.push_back(predict_reply(model, m, cfg));
  return out;
}

template <typename S>
std::vector<corpus::TokenSequence> batch_generate(const SentenceCompletionModel<S>& model,
                                                  const std::vector<corpus::TokenSequence>& prefixes,
                                                  const DecodeConfig& cfg) {
  std::vector<corpus::TokenSequence> out;
  out.reserve(prefixes.size());
  for (const auto& m : prefixes) out.push_back(complete_sentence(model, m, cfg));
  return out;
}

}  // namespace plm::models
