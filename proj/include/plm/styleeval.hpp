#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "plm/decode.hpp"
#include "plm/transfer.hpp"
#include "plm/vocab.hpp"

namespace plm::eval {

struct WordDistribution {
  std::vector<double> probs;  // indexed by token id, full vocabulary
  std::size_t support_size = 0;
  std::size_t source_token_count = 0;
};

// Normalized word histogram.  eos ids are skipped: style lives in word
// choice, and eos frequency is only a sentence-length proxy.
inline WordDistribution word_distribution(const std::vector<std::int32_t>& tokens,
                                          std::size_t vocab_size) {
  if (tokens.empty()) throw DataError("word_distribution: empty corpus");
  WordDistribution d;
  d.probs.assign(vocab_size, 0.0);
  for (auto id : tokens) {
    if (id == corpus::Vocabulary::kEosId) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
      throw DataError("word_distribution: token id out of range");
    d.probs[static_cast<std::size_t>(id)] += 1.0;
    ++d.source_token_count;
  }
  if (d.source_token_count == 0)
    throw DataError("word_distribution: no countable tokens (eos only)");
  for (auto& v : d.probs) {
    v /= static_cast<double>(d.source_token_count);
    if (v > 0.0) ++d.support_size;
  }
  return d;
}

inline WordDistribution word_distribution(const std::vector<corpus::TokenSequence>& corpus,
                                          std::size_t vocab_size) {
  std::vector<std::int32_t> flat;
  for (const auto& s : corpus) flat.insert(flat.end(), s.ids.begin(), s.ids.end());
  return word_distribution(flat, vocab_size);
}

// −Σ_x p(x)·log q̃(x) in nats, with q̃ = (q + ε)/(1 + V·ε).  Deliberately
// asymmetric; callers must not average the two directions.
inline double style_cross_entropy(const WordDistribution& p, const WordDistribution& q,
                                  double epsilon = 1e-8) {
  if (p.probs.size() != q.probs.size())
    throw ShapeError("style_cross_entropy: vocabulary mismatch");
  if (epsilon <= 0.0) throw ConfigError("style_cross_entropy: epsilon must be positive");
  const double v = static_cast<double>(p.probs.size());
  const double z = 1.0 + v * epsilon;
  double ce = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (p.probs[i] == 0.0) continue;
    ce -= p.probs[i] * std::log((q.probs[i] + epsilon) / z);
  }
  return ce;
}

struct SimilarityMatrix {
  std::vector<std::string> labels;
  net::Matrix<double> values;
};

using LabeledCorpus = std::pair<std::string, std::vector<std::int32_t>>;

namespace detail {

// Seeded disjoint halves of a token list.  The split is salted with the
// corpus content so identical corpora split identically wherever they appear.
inline std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> half_split(
    const std::vector<std::int32_t>& tokens, std::uint64_t seed) {
  std::vector<std::int32_t> words;
  for (auto id : tokens)
    if (id != corpus::Vocabulary::kEosId) words.push_back(id);
  if (words.size() < 2) throw DataError("similarity_matrix: corpus too small to split");
  const std::uint64_t salt = fnv1a(words.data(), words.size() * sizeof(std::int32_t), seed);
  Rng rng(salt);
  rng.shuffle(words);
  const std::size_t mid = words.size() / 2;
  return {std::vector<std::int32_t>(words.begin(), words.begin() + mid),
          std::vector<std::int32_t>(words.begin() + mid, words.end())};
}

}  // namespace detail

// Entry (i,j) = cross entropy of corpus i's word distribution against corpus
// j's.  The diagonal compares disjoint seeded halves of the same corpus, so a
// corpus is not trivially its own best match.
inline SimilarityMatrix similarity_matrix(const std::vector<LabeledCorpus>& corpora,
                                          std::size_t vocab_size, double epsilon = 1e-8,
                                          std::uint64_t seed = 1) {
  if (corpora.size() < 2) throw ConfigError("similarity_matrix: need at least two corpora");
  const std::size_t k = corpora.size();
  SimilarityMatrix m;
  m.values = net::Matrix<double>(k, k);
  std::vector<WordDistribution> dist;
  for (const auto& [label, tokens] : corpora) {
    m.labels.push_back(label);
    dist.push_back(word_distribution(tokens, vocab_size));
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) {
        auto [a, b] = detail::half_split(corpora[i].second, seed);
        m.values.at(i, j) = style_cross_entropy(word_distribution(a, vocab_size),
                                                word_distribution(b, vocab_size), epsilon);
      } else {
        m.values.at(i, j) = style_cross_entropy(dist[i], dist[j], epsilon);
      }
    }
  }
  return m;
}

struct ConvergenceTable {
  std::vector<std::string> targets;
  std::vector<std::size_t> epochs;
  net::Matrix<double> values;  // targets × epochs
};

// Fine-tune under one scheme, pausing at each probe epoch to generate replies
// for the test messages and score their word distribution against every
// target corpus.  Probe 0 scores the grafted-but-untrained model, which for
// an identity surplus is the general model itself.
template <typename S>
ConvergenceTable style_convergence(const io::Checkpoint<S>& general,
                                   const transfer::SchemeSpec& scheme,
                                   const std::vector<net::Sample>& persona_train,
                                   const std::vector<LabeledCorpus>& target_corpora,
                                   const std::vector<std::size_t>& probe_epochs,
                                   const std::vector<corpus::TokenSequence>& test_messages,
                                   const net::TrainConfig& cfg,
                                   const models::DecodeConfig& decode_cfg,
                                   std::size_t vocab_size, double epsilon = 1e-8) {
  if (probe_epochs.empty()) throw ConfigError("style_convergence: no probe epochs");
  for (std::size_t i = 1; i < probe_epochs.size(); ++i)
    if (probe_epochs[i] <= probe_epochs[i - 1])
      throw ConfigError("style_convergence: probe epochs must be strictly ascending");
  if (target_corpora.empty()) throw ConfigError("style_convergence: no target corpora");
  if (test_messages.empty()) throw ConfigError("style_convergence: no test messages");

  ConvergenceTable table;
  for (const auto& [label, tokens] : target_corpora) table.targets.push_back(label);
  table.epochs = probe_epochs;
  table.values = net::Matrix<double>(target_corpora.size(), probe_epochs.size());

  std::vector<WordDistribution> target_dist;
  for (const auto& [label, tokens] : target_corpora)
    target_dist.push_back(word_distribution(tokens, vocab_size));

  models::MessageReplyModel<S> model;
  model.params = general.params;
  model.vocab_fingerprint = general.vocab_fingerprint;
  if (scheme.kind == transfer::SchemeKind::kSurplusLayer && !model.params.has_surplus())
    model.params = transfer::insert_surplus(model.params, scheme.surplus_kind, cfg.seed);
  const net::TrainableMask mask = transfer::derive_mask(scheme, model.params);

  std::size_t done = 0;
  for (std::size_t col = 0; col < probe_epochs.size(); ++col) {
    const std::size_t probe = probe_epochs[col];
    if (probe > done) {
      net::TrainConfig seg = cfg;
      seg.epochs = probe - done;
      net::train(model.params, persona_train, {}, seg, mask, done + 1);
      done = probe;
    }
    const auto replies = models::batch_generate(model, test_messages, decode_cfg);
    std::vector<std::int32_t> generated;
    for (const auto& r : replies) generated.insert(generated.end(), r.ids.begin(), r.ids.end());
    const WordDistribution gen_dist = word_distribution(generated, vocab_size);
    for (std::size_t row = 0; row < target_dist.size(); ++row)
      table.values.at(row, col) = style_cross_entropy(gen_dist, target_dist[row], epsilon);
  }
  return table;
}

}  // namespace plm::eval
