#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "plm/error.hpp"
#include "plm/vocab.hpp"

namespace plm::corpus {

// One utterance of a script file (`SPEAKER<TAB>text`).
struct SpeakerLine {
  std::string speaker;
  std::string text;
};

// Adjacent different-speaker utterances, still as raw text.
struct MessageReplyText {
  std::string message;
  std::string reply;
};

// Encoded message/reply pair.  The message carries no trailing eos (the
// border token is supplied when the pair is laid out as one sequence); the
// reply is eos-terminated.
struct MessageReplyPair {
  TokenSequence message;
  TokenSequence reply;
};

inline std::vector<SpeakerLine> parse_script(std::istream& is) {
  std::vector<SpeakerLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw DataError("script line " + std::to_string(lineno) +
                      ": expected SPEAKER<TAB>utterance");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

inline std::vector<SpeakerLine> parse_script_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open script file: " + path);
  return parse_script(is);
}

namespace detail {
inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}
}  // namespace detail

// Order-preserving, case-insensitive selection of one speaker's lines.
inline std::vector<SpeakerLine> filter_speaker(const std::vector<SpeakerLine>& script,
                                               std::string_view speaker) {
  std::vector<SpeakerLine> out;
  for (const auto& line : script)
    if (detail::iequals(line.speaker, speaker)) out.push_back(line);
  return out;
}

// Every adjacent pair of lines spoken by different speakers becomes one
// message->reply example; adjacent same-speaker lines contribute nothing.
inline std::vector<MessageReplyText> build_pairs(const std::vector<SpeakerLine>& script) {
  std::vector<MessageReplyText> out;
  for (std::size_t i = 0; i + 1 < script.size(); ++i) {
    if (!detail::iequals(script[i].speaker, script[i + 1].speaker))
      out.push_back({script[i].text, script[i + 1].text});
  }
  return out;
}

// Tokenize + encode raw pairs; pairs whose message or reply tokenizes to
// nothing are dropped (both sides must be non-empty).
inline std::vector<MessageReplyPair> encode_pairs(const std::vector<MessageReplyText>& pairs,
                                                  const Vocabulary& vocab) {
  std::vector<MessageReplyPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto msg = tokenize(p.message);
    auto rep = tokenize(p.reply);
    if (msg.empty() || rep.empty()) continue;
    out.push_back({encode(msg, vocab, /*append_eos=*/false), encode(rep, vocab, /*append_eos=*/true)});
  }
  return out;
}

// Plain-text corpus: one sentence per line.
inline std::vector<std::vector<std::string>> read_corpus_lines(std::istream& is) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tokens = tokenize(line);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

inline std::vector<std::vector<std::string>> read_corpus_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open corpus file: " + path);
  return read_corpus_lines(is);
}

}  // namespace plm::corpus
