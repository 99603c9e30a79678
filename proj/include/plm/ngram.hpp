#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "plm/error.hpp"
#include "plm/vocab.hpp"

namespace plm::ngram {

// Sentence-begin marker, internal only: it pads contexts and is never
// predicted or part of the vocabulary.
constexpr std::int32_t kBosId = -1;

namespace detail {

// Grams are hash-map keys packed as raw little-endian id bytes.
using Key = std::string;

inline Key make_key(const std::int32_t* ids, std::size_t n) {
  return Key(reinterpret_cast<const char*>(ids), n * sizeof(std::int32_t));
}

inline std::vector<std::int32_t> key_ids(const Key& k) {
  std::vector<std::int32_t> ids(k.size() / sizeof(std::int32_t));
  std::memcpy(ids.data(), k.data(), k.size());
  return ids;
}

inline std::int32_t key_front(const Key& k) {
  std::int32_t id;
  std::memcpy(&id, k.data(), sizeof(id));
  return id;
}

}  // namespace detail

using CountMap = std::unordered_map<detail::Key, std::uint64_t>;

struct NgramCounts {
  std::size_t order = 0;
  std::size_t vocab_size = 0;
  std::size_t sentences = 0;
  // raw[m-1]: windows of length m ending at a real token (never at padding)
  std::vector<CountMap> raw;
  // adjusted[m-1]: what estimation uses — continuation (left-extension type)
  // counts below the top order, raw counts at the top order and for
  // begin-marker-initial grams, which cannot be left-extended
  std::vector<CountMap> adjusted;
  // count_of_counts[m-1][i]: number of adjusted m-grams with count i+1
  std::vector<std::array<std::uint64_t, 4>> count_of_counts;
};

inline NgramCounts count_ngrams(const std::vector<corpus::TokenSequence>& corpus, std::size_t n,
                                std::size_t vocab_size) {
  if (n < 1) throw ConfigError("count_ngrams: order must be >= 1");
  if (vocab_size < 2) throw ConfigError("count_ngrams: vocabulary too small");
  NgramCounts c;
  c.order = n;
  c.vocab_size = vocab_size;
  c.raw.resize(n);
  c.adjusted.resize(n);
  c.count_of_counts.assign(n, {0, 0, 0, 0});

  std::vector<std::int32_t> padded;
  for (const auto& sent : corpus) {
    if (sent.ids.empty()) continue;
    if (!sent.terminated || sent.ids.back() != corpus::Vocabulary::kEosId)
      throw DataError("count_ngrams: sentences must be eos-terminated");
    for (auto id : sent.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
        throw DataError("count_ngrams: token id out of range");
    ++c.sentences;
    padded.assign(n - 1, kBosId);
    padded.insert(padded.end(), sent.ids.begin(), sent.ids.end());
    for (std::size_t end = n - 1; end < padded.size(); ++end) {
      for (std::size_t m = 1; m <= n; ++m) {
        const std::size_t start = end + 1 - m;
        ++c.raw[m - 1][detail::make_key(padded.data() + start, m)];
      }
    }
  }

  // adjusted counts: top order copies raw; below it, each stored (m+1)-gram
  // contributes one left-extension type to its length-m suffix
  c.adjusted[n - 1] = c.raw[n - 1];
  for (std::size_t m = n - 1; m >= 1; --m) {
    auto& adj = c.adjusted[m - 1];
    for (const auto& [key, cnt] : c.raw[m]) {
      (void)cnt;
      ++adj[key.substr(sizeof(std::int32_t))];
    }
    for (const auto& [key, cnt] : c.raw[m - 1]) {
      if (detail::key_front(key) == kBosId) adj[key] = cnt;
    }
  }

  for (std::size_t m = 1; m <= n; ++m)
    for (const auto& [key, cnt] : c.adjusted[m - 1]) {
      (void)key;
      if (cnt >= 1 && cnt <= 4) ++c.count_of_counts[m - 1][cnt - 1];
    }
  return c;
}

// Merge counts from a shard (counting is associative).  Count-of-counts and
// adjusted counts are only valid on the final merged object, so they are
// recomputed by the caller via count_ngrams on the combined corpus; this
// helper only folds raw counts and is provided for sharded counting.
inline void merge_raw_counts(NgramCounts& into, const NgramCounts& from) {
  if (into.order != from.order || into.vocab_size != from.vocab_size)
    throw ShapeError("merge_raw_counts: incompatible count tables");
  into.sentences += from.sentences;
  for (std::size_t m = 0; m < into.order; ++m)
    for (const auto& [key, cnt] : from.raw[m]) into.raw[m][key] += cnt;
}

struct Discounts {
  double d1 = 0.75, d2 = 0.75, d3 = 0.75;
  bool fallback = false;

  double of(std::uint64_t count) const {
    if (count == 0) return 0.0;
    if (count == 1) return d1;
    if (count == 2) return d2;
    return d3;
  }
};

// Three-discount estimates from count-of-count statistics; falls back to a
// single absolute discount when the statistics are degenerate.
inline Discounts derive_discounts(const std::array<std::uint64_t, 4>& n) {
  Discounts d;
  const auto n1 = static_cast<double>(n[0]);
  const auto n2 = static_cast<double>(n[1]);
  const auto n3 = static_cast<double>(n[2]);
  const auto n4 = static_cast<double>(n[3]);
  if (n[0] == 0 || n[1] == 0 || n[2] == 0 || n[3] == 0) {
    d.fallback = true;
    return d;
  }
  const double y = n1 / (n1 + 2.0 * n2);
  d.d1 = 1.0 - 2.0 * y * n2 / n1;
  d.d2 = 2.0 - 3.0 * y * n3 / n2;
  d.d3 = 3.0 - 4.0 * y * n4 / n3;
  if (d.d1 < 0.0 || d.d1 >= 1.0 || d.d2 < 0.0 || d.d2 >= 2.0 || d.d3 < 0.0 || d.d3 >= 3.0) {
    d = Discounts{};
    d.fallback = true;
  }
  return d;
}

struct KneserNeyModel {
  std::size_t order = 0;
  std::size_t vocab_size = 0;
  std::uint64_t vocab_fingerprint = 0;
  std::vector<Discounts> discounts;  // per order, kept for inspection
  std::vector<double> unigram;       // dense p(w), size vocab_size
  // probs[m-2]: stored m-gram -> p(w | context); backoff[k-1]: length-k
  // context -> interpolation weight for its unseen continuations
  std::vector<std::unordered_map<detail::Key, double>> probs;
  std::vector<std::unordered_map<detail::Key, double>> backoff;

  // p(w | context), backing off to shorter contexts and finally the dense
  // unigram row.  Contexts longer than order-1 are truncated on the left.
  double prob(const std::int32_t* context, std::size_t len, std::int32_t word) const {
    if (word < 0 || static_cast<std::size_t>(word) >= vocab_size)
      throw DataError("ngram prob: word id out of range");
    if (len > order - 1) {
      context += len - (order - 1);
      len = order - 1;
    }
    double weight = 1.0;
    for (std::size_t k = len; k > 0; --k) {
      std::vector<std::int32_t> gram(context + len - k, context + len);
      gram.push_back(word);
      const auto it = probs[k - 1].find(detail::make_key(gram.data(), gram.size()));
      if (it != probs[k - 1].end()) return weight * it->second;
      const auto bo = backoff[k - 1].find(detail::make_key(context + len - k, k));
      if (bo != backoff[k - 1].end()) weight *= bo->second;
    }
    return weight * unigram[static_cast<std::size_t>(word)];
  }

  double prob(const std::vector<std::int32_t>& context, std::int32_t word) const {
    return prob(context.data(), context.size(), word);
  }
};

inline KneserNeyModel estimate_kn(const NgramCounts& counts, std::uint64_t vocab_fingerprint = 0) {
  if (counts.order == 0 || counts.sentences == 0 || counts.adjusted.empty() ||
      counts.adjusted[0].empty())
    throw DataError("estimate_kn: empty counts");
  KneserNeyModel m;
  m.order = counts.order;
  m.vocab_size = counts.vocab_size;
  m.vocab_fingerprint = vocab_fingerprint;
  for (std::size_t i = 0; i < counts.order; ++i)
    m.discounts.push_back(derive_discounts(counts.count_of_counts[i]));
  m.probs.resize(counts.order >= 2 ? counts.order - 1 : 0);
  m.backoff.resize(counts.order >= 2 ? counts.order - 1 : 0);

  // unigrams: discounted adjusted counts interpolated with the uniform floor
  {
    const Discounts& d = m.discounts[0];
    double total = 0.0;
    double held_out = 0.0;
    for (const auto& [key, cnt] : counts.adjusted[0]) {
      (void)key;
      total += static_cast<double>(cnt);
      held_out += d.of(cnt);
    }
    const double gamma = held_out / total;
    const double floor = gamma / static_cast<double>(m.vocab_size);
    m.unigram.assign(m.vocab_size, floor);
    for (const auto& [key, cnt] : counts.adjusted[0]) {
      const std::int32_t id = detail::key_front(key);
      m.unigram[static_cast<std::size_t>(id)] =
          (static_cast<double>(cnt) - d.of(cnt)) / total + floor;
    }
  }

  // higher orders, bottom up, so each level can interpolate with the one below
  for (std::size_t order = 2; order <= counts.order; ++order) {
    const Discounts& d = m.discounts[order - 1];
    struct ContextStats {
      double sum = 0.0;
      double held_out = 0.0;
    };
    std::unordered_map<detail::Key, ContextStats> ctx;
    for (const auto& [key, cnt] : counts.adjusted[order - 1]) {
      auto& s = ctx[key.substr(0, key.size() - sizeof(std::int32_t))];
      s.sum += static_cast<double>(cnt);
      s.held_out += d.of(cnt);
    }
    for (const auto& [key, s] : ctx) m.backoff[order - 2][key] = s.held_out / s.sum;
    for (const auto& [key, cnt] : counts.adjusted[order - 1]) {
      const detail::Key ckey = key.substr(0, key.size() - sizeof(std::int32_t));
      const ContextStats& s = ctx.at(ckey);
      const auto ids = detail::key_ids(key);
      const std::int32_t word = ids.back();
      const double lower = m.prob(ids.data() + 1, ids.size() - 2, word);
      m.probs[order - 2][key] =
          (static_cast<double>(cnt) - d.of(cnt)) / s.sum + (s.held_out / s.sum) * lower;
    }
  }
  return m;
}

// exp(mean NLL in nats per token); eos predictions count, begin markers never
// do — the same denominator convention as the neural perplexity.
inline double ngram_perplexity(const KneserNeyModel& m,
                               const std::vector<corpus::TokenSequence>& corpus) {
  double nll = 0.0;
  std::size_t tokens = 0;
  std::vector<std::int32_t> padded;
  for (const auto& sent : corpus) {
    if (sent.ids.empty()) continue;
    padded.assign(m.order - 1, kBosId);
    padded.insert(padded.end(), sent.ids.begin(), sent.ids.end());
    for (std::size_t i = m.order - 1; i < padded.size(); ++i) {
      const double p = m.prob(padded.data() + i - (m.order - 1), m.order - 1, padded[i]);
      if (p <= 0.0) throw NumericError("ngram_perplexity: zero probability");
      nll -= std::log(p);
      ++tokens;
    }
  }
  if (tokens == 0) throw ConfigError("ngram_perplexity: empty dataset");
  return std::exp(nll / static_cast<double>(tokens));
}

// ---------------------------------------------------------------------------
// Plain-text dump/load, one line per n-gram: log10 prob, tab, space-joined
// tokens, and for grams that act as contexts a trailing tab + log10 backoff.
// The begin marker is written as <s> with the conventional -99 placeholder
// probability.
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kLogProbFloor = -99.0;
constexpr const char* kBosToken = "<s>";

inline std::string token_name(std::int32_t id, const corpus::Vocabulary& vocab) {
  return id == kBosId ? std::string(kBosToken) : vocab.token(id);
}

inline std::int32_t token_id(const std::string& name, const corpus::Vocabulary& vocab) {
  if (name == kBosToken) return kBosId;
  if (!vocab.contains(name)) throw DataError("ngram load: unknown token '" + name + "'");
  return vocab.id_or_unk(name);
}

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void dump_model(const KneserNeyModel& m, const corpus::Vocabulary& vocab,
                       std::ostream& out) {
  if (vocab.size() != m.vocab_size) throw ShapeError("ngram dump: vocabulary size mismatch");
  const double ln10 = std::log(10.0);

  struct Line {
    double logp = detail::kLogProbFloor;
    bool has_backoff = false;
    double backoff = 0.0;
  };
  // sorted so the dump is deterministic; the begin marker (-1) sorts first
  std::vector<std::map<std::vector<std::int32_t>, Line>> levels(m.order);
  for (std::size_t w = 0; w < m.vocab_size; ++w)
    levels[0][{static_cast<std::int32_t>(w)}].logp = std::log(m.unigram[w]) / ln10;
  levels[0][{kBosId}];  // placeholder probability, carries the bos backoff
  for (std::size_t k = 2; k <= m.order; ++k)
    for (const auto& [key, p] : m.probs[k - 2])
      levels[k - 1][detail::key_ids(key)].logp = std::log(p) / ln10;
  for (std::size_t k = 1; k + 1 <= m.order; ++k)
    for (const auto& [key, g] : m.backoff[k - 1]) {
      Line& line = levels[k - 1][detail::key_ids(key)];
      line.has_backoff = true;
      line.backoff = std::log(g) / ln10;
    }

  out << "\\data\\\n";
  for (std::size_t k = 1; k <= m.order; ++k)
    out << "ngram " << k << "=" << levels[k - 1].size() << "\n";
  for (std::size_t k = 1; k <= m.order; ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const auto& [ids, line] : levels[k - 1]) {
      out << detail::fmt17(line.logp) << "\t";
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out << ' ';
        out << detail::token_name(ids[i], vocab);
      }
      if (line.has_backoff) out << "\t" << detail::fmt17(line.backoff);
      out << "\n";
    }
  }
  out << "\n\\end\\\n";
}

inline KneserNeyModel load_model(std::istream& in, const corpus::Vocabulary& vocab) {
  KneserNeyModel m;
  m.vocab_size = vocab.size();
  m.vocab_fingerprint = vocab.fingerprint();

  std::string line;
  std::vector<std::size_t> declared;
  // header
  while (std::getline(in, line)) {
    if (line == "\\data\\") break;
  }
  if (line != "\\data\\") throw IoError("ngram load: missing \\data\\ header");
  while (std::getline(in, line)) {
    if (line.empty()) break;
    if (line.rfind("ngram ", 0) != 0) throw IoError("ngram load: malformed count line");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("ngram load: malformed count line");
    declared.push_back(std::stoull(line.substr(eq + 1)));
  }
  if (declared.empty()) throw IoError("ngram load: no ngram counts declared");
  m.order = declared.size();
  m.unigram.assign(m.vocab_size, 0.0);
  m.probs.resize(m.order >= 2 ? m.order - 1 : 0);
  m.backoff.resize(m.order >= 2 ? m.order - 1 : 0);
  m.discounts.resize(m.order);

  std::size_t current = 0;  // current section order, 0 = none
  std::size_t seen_in_section = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "\\end\\") break;
    if (line.front() == '\\') {
      const auto dash = line.find("-grams:");
      if (dash == std::string::npos) throw IoError("ngram load: unexpected section " + line);
      if (current != 0 && seen_in_section != declared[current - 1])
        throw IoError("ngram load: gram count mismatch in order " + std::to_string(current));
      current = std::stoull(line.substr(1, dash - 1));
      if (current < 1 || current > m.order) throw IoError("ngram load: section order out of range");
      seen_in_section = 0;
      continue;
    }
    if (current == 0) throw IoError("ngram load: gram line before any section");
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3)
      throw IoError("ngram load: malformed gram line: " + line);
    const double logp = std::stod(fields[0]);
    std::istringstream toks(fields[1]);
    std::vector<std::int32_t> ids;
    std::string tok;
    while (toks >> tok) ids.push_back(detail::token_id(tok, vocab));
    if (ids.size() != current) throw IoError("ngram load: gram length mismatch: " + line);
    ++seen_in_section;

    if (logp > detail::kLogProbFloor + 1e-9) {
      const double p = std::pow(10.0, logp);
      if (current == 1) {
        if (ids[0] != kBosId) m.unigram[static_cast<std::size_t>(ids[0])] = p;
      } else {
        m.probs[current - 2][detail::make_key(ids.data(), ids.size())] = p;
      }
    }
    if (fields.size() == 3 && current < m.order) {
      m.backoff[current - 1][detail::make_key(ids.data(), ids.size())] =
          std::pow(10.0, std::stod(fields[2]));
    }
  }
  if (current != 0 && seen_in_section != declared[current - 1])
    throw IoError("ngram load: gram count mismatch in order " + std::to_string(current));
  return m;
}

}  // namespace plm::ngram
