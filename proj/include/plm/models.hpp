#pragma once

#include <cstdint>
#include <vector>

#include "plm/script.hpp"
#include "plm/train.hpp"
#include "plm/vocab.hpp"

namespace plm::models {

// Sentence completion: p(w_{t+1} | w_1..w_t).  The eos token doubles as the
// start-of-sentence input, so a k-word sentence yields k+1 predictions
// (k words plus the closing eos).
template <typename S>
struct SentenceCompletionModel {
  net::ModelParams<S> params;
  std::uint64_t vocab_fingerprint = 0;
};

// Message-reply: one shared stack reads message, border eos, then the reply;
// the state at the border carries the message context into decoding.
template <typename S>
struct MessageReplyModel {
  net::ModelParams<S> params;
  std::uint64_t vocab_fingerprint = 0;
};

inline net::Sample make_lm_sample(const corpus::TokenSequence& sentence) {
  if (!sentence.terminated || sentence.ids.empty() ||
      sentence.ids.back() != corpus::Vocabulary::kEosId)
    throw DataError("make_lm_sample: sentence must be eos-terminated");
  net::Sample s;
  s.inputs.reserve(sentence.ids.size());
  s.inputs.push_back(corpus::Vocabulary::kEosId);
  s.inputs.insert(s.inputs.end(), sentence.ids.begin(), sentence.ids.end() - 1);
  s.targets = sentence.ids;
  s.loss_begin = 0;
  return s;
}

// Layout: inputs [m_1..m_k, eos, r_1..r_{j-1}], targets shifted by one; loss
// starts where the border eos is consumed, i.e. on the reply and its eos.
inline net::Sample make_reply_sample(const corpus::MessageReplyPair& pair) {
  if (pair.message.ids.empty()) throw DataError("make_reply_sample: empty message");
  if (!pair.reply.terminated || pair.reply.ids.empty())
    throw DataError("make_reply_sample: reply must be eos-terminated");
  std::vector<std::int32_t> seq = pair.message.ids;
  seq.push_back(corpus::Vocabulary::kEosId);
  seq.insert(seq.end(), pair.reply.ids.begin(), pair.reply.ids.end());
  net::Sample s;
  s.inputs.assign(seq.begin(), seq.end() - 1);
  s.targets.assign(seq.begin() + 1, seq.end());
  s.loss_begin = pair.message.ids.size();
  return s;
}

inline std::vector<net::Sample> make_lm_samples(const std::vector<corpus::TokenSequence>& sents) {
  std::vector<net::Sample> out;
  out.reserve(sents.size());
  for (const auto& s : sents) out.push_back(make_lm_sample(s));
  return out;
}

inline std::vector<net::Sample> make_reply_samples(
    const std::vector<corpus::MessageReplyPair>& pairs) {
  std::vector<net::Sample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(make_reply_sample(p));
  return out;
}

}  // namespace plm::models
