#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "plm/error.hpp"
#include "plm/rng.hpp"

namespace plm::corpus {

// A sentence (or message/reply part) as vocabulary ids.  `terminated` means
// the sequence ends with the end-of-sentence id.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  bool terminated = false;

  bool empty() const { return ids.empty(); }
  std::size_t size() const { return ids.size(); }
};

// Token <-> id bijection with two reserved entries: id 0 is the
// end-of-sentence token, id 1 the unknown-word token.  Ids are dense.
class Vocabulary {
 public:
  static constexpr std::int32_t kEosId = 0;
  static constexpr std::int32_t kUnkId = 1;
  static constexpr const char* kEosToken = "<eos>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // `content` are the non-reserved tokens, in id order starting at 2.
  explicit Vocabulary(std::vector<std::string> content) {
    tokens_.reserve(content.size() + 2);
    tokens_.emplace_back(kEosToken);
    tokens_.emplace_back(kUnkToken);
    for (auto& t : content) tokens_.push_back(std::move(t));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tokens_[i], static_cast<std::int32_t>(i));
      if (!inserted) throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }

  std::int32_t eos_id() const { return kEosId; }
  std::int32_t unk_id() const { return kUnkId; }
  std::size_t size() const { return tokens_.size(); }

  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(std::string_view token) const { return index_.find(std::string(token)) != index_.end(); }

  // Id of `token`, or unk_id when absent.
  std::int32_t id_or_unk(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
  }

  // Stable content hash; models remember it so mismatched encodings are
  // detected instead of silently producing garbage.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
      h = fnv1a(t.data(), t.size(), h);
      h = fnv1a("\x1f", 1, h);
    }
    return h;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

namespace detail {
inline bool is_word_byte(unsigned char c) {
  // Non-ASCII bytes are treated as word characters so UTF-8 text passes
  // through unsplit.
  return std::isalnum(c) != 0 || c >= 0x80;
}
}  // namespace detail

// Lowercases, splits on whitespace, and emits punctuation as standalone
// single-character tokens.  Apostrophes stay inside words ("don't"), but
// leading/trailing ones are split off.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (detail::is_word_byte(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else if (c == '\'' && !cur.empty() && i + 1 < n &&
               detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back('\'');  // word-internal apostrophe
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return out;
}

// Keeps the (max_size - 2) most frequent tokens; ties break lexicographically
// so the result is reproducible.  Reserved tokens are never counted.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora,
                              std::size_t max_size) {
  if (max_size < 2) throw ConfigError("build_vocab: max_size must be >= 2");
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& tokens : corpora) {
    for (const auto& t : tokens) {
      if (t == Vocabulary::kEosToken || t == Vocabulary::kUnkToken) continue;
      ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t keep = std::min(ranked.size(), max_size - 2);
  std::vector<std::string> content;
  content.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) content.push_back(ranked[i].first);
  return Vocabulary(std::move(content));
}

// Unknown words map to unk_id.
inline TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            bool append_eos) {
  TokenSequence seq;
  seq.ids.reserve(tokens.size() + (append_eos ? 1 : 0));
  for (const auto& t : tokens) seq.ids.push_back(vocab.id_or_unk(t));
  if (append_eos) seq.ids.push_back(vocab.eos_id());
  seq.terminated = !seq.ids.empty() && seq.ids.back() == vocab.eos_id();
  return seq;
}

inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(seq.ids.size());
  for (auto id : seq.ids) out.push_back(vocab.token(id));
  return out;
}

inline double oov_rate(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  if (tokens.empty()) return 0.0;
  std::size_t missing = 0;
  for (const auto& t : tokens)
    if (!vocab.contains(t)) ++missing;
  return static_cast<double>(missing) / static_cast<double>(tokens.size());
}

// --- vocabulary file: one token per line, line number == id --------------

inline void save_vocabulary(const Vocabulary& vocab, std::ostream& os) {
  for (const auto& t : vocab.tokens()) os << t << '\n';
}

inline Vocabulary load_vocabulary(std::istream& is) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 2 || lines[0] != Vocabulary::kEosToken || lines[1] != Vocabulary::kUnkToken)
    throw DataError("vocabulary file: first two lines must be the reserved eos and unk tokens");
  return Vocabulary(std::vector<std::string>(lines.begin() + 2, lines.end()));
}

inline Vocabulary load_vocabulary_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary file: " + path);
  return load_vocabulary(is);
}

}  // namespace plm::corpus
