#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "plm/error.hpp"
#include "plm/script.hpp"
#include "plm/vocab.hpp"

namespace corpus = plm::corpus;
using corpus::SpeakerLine;
using corpus::Vocabulary;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> xs) {
  return std::vector<std::string>(xs.begin(), xs.end());
}

}  // namespace

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(corpus::tokenize("It is possible, however"),
            toks({"it", "is", "possible", ",", "however"}));
}

TEST(Tokenize, EmptyText) {
  EXPECT_TRUE(corpus::tokenize("").empty());
  EXPECT_TRUE(corpus::tokenize("   \t \n").empty());
}

TEST(Tokenize, KeepsWordInternalApostrophes) {
  EXPECT_EQ(corpus::tokenize("Don't go!"), toks({"don't", "go", "!"}));
  EXPECT_EQ(corpus::tokenize("'tis 'quoted'"), toks({"'", "tis", "'", "quoted", "'"}));
}

TEST(Tokenize, Deterministic) {
  const std::string text = "Hello, WORLD!  It's fine... ok?";
  EXPECT_EQ(corpus::tokenize(text), corpus::tokenize(text));
}

TEST(Tokenize, Utf8PassesThroughUnsplit) {
  const auto out = corpus::tokenize("caf\xc3\xa9 time");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], "caf\xc3\xa9");
  EXPECT_EQ(out[1], "time");
}

TEST(BuildVocab, EmptyCorpusKeepsReservedOnly) {
  const auto v = corpus::build_vocab({}, 10);
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.token(Vocabulary::kEosId), Vocabulary::kEosToken);
  EXPECT_EQ(v.token(Vocabulary::kUnkId), Vocabulary::kUnkToken);
}

TEST(BuildVocab, DropsLeastFrequentAtCapacity) {
  const auto v = corpus::build_vocab({toks({"a", "a", "b"})}, 3);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
}

TEST(BuildVocab, LexicographicTieBreak) {
  const auto v = corpus::build_vocab({toks({"zebra", "apple", "mango"})}, 4);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_TRUE(v.contains("apple"));
  EXPECT_TRUE(v.contains("mango"));
  EXPECT_FALSE(v.contains("zebra"));
}

TEST(BuildVocab, FrequencyBeatsAlphabet) {
  const auto v = corpus::build_vocab({toks({"zzz", "zzz", "aaa"})}, 3);
  EXPECT_TRUE(v.contains("zzz"));
  EXPECT_FALSE(v.contains("aaa"));
}

TEST(BuildVocab, TooSmallCapacityThrows) {
  EXPECT_THROW(corpus::build_vocab({}, 1), plm::ConfigError);
  EXPECT_THROW(corpus::build_vocab({}, 0), plm::ConfigError);
}

TEST(BuildVocab, DeterministicAcrossCalls) {
  const std::vector<std::vector<std::string>> corpora = {
      toks({"b", "a", "c", "a"}), toks({"c", "d", "d", "e"})};
  const auto v1 = corpus::build_vocab(corpora, 5);
  const auto v2 = corpus::build_vocab(corpora, 5);
  EXPECT_EQ(v1.tokens(), v2.tokens());
  EXPECT_EQ(v1.fingerprint(), v2.fingerprint());
}

TEST(Encode, SubstitutesUnknownAndAppendsEos) {
  const auto v = corpus::build_vocab({toks({"a"})}, 3);
  const auto seq = corpus::encode(toks({"a", "zzz"}), v, true);
  ASSERT_EQ(seq.ids.size(), 3u);
  EXPECT_EQ(seq.ids[0], v.id_or_unk("a"));
  EXPECT_EQ(seq.ids[1], Vocabulary::kUnkId);
  EXPECT_EQ(seq.ids[2], Vocabulary::kEosId);
  EXPECT_TRUE(seq.terminated);
}

TEST(Encode, EmptyWithEos) {
  const Vocabulary v;
  const auto seq = corpus::encode({}, v, true);
  ASSERT_EQ(seq.ids.size(), 1u);
  EXPECT_EQ(seq.ids[0], Vocabulary::kEosId);
  EXPECT_TRUE(seq.terminated);
  EXPECT_FALSE(corpus::encode({}, v, false).terminated);
}

TEST(Encode, OwnVocabularyHasNoSubstitutions) {
  const auto words = toks({"x", "y", "z", "y"});
  const auto v = corpus::build_vocab({words}, 100);
  const auto seq = corpus::encode(words, v, false);
  for (auto id : seq.ids) EXPECT_NE(id, Vocabulary::kUnkId);
  EXPECT_EQ(corpus::decode(seq, v), words);
}

TEST(OovRate, FullCoverageIsZero) {
  const auto words = toks({"p", "q", "p"});
  const auto v = corpus::build_vocab({words}, 100);
  EXPECT_EQ(corpus::oov_rate(words, v), 0.0);
}

TEST(OovRate, HalfMissing) {
  const auto v = corpus::build_vocab({toks({"a"})}, 3);
  EXPECT_DOUBLE_EQ(corpus::oov_rate(toks({"a", "zzz"}), v), 0.5);
}

TEST(OovRate, EmptyInputIsZero) {
  const Vocabulary v;
  EXPECT_EQ(corpus::oov_rate({}, v), 0.0);
}

TEST(BuildPairs, AdjacentDifferentSpeakers) {
  const std::vector<SpeakerLine> script = {
      {"A", "hi"}, {"B", "hello"}, {"B", "yes"}, {"C", "ok"}};
  const auto pairs = corpus::build_pairs(script);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].message, "hi");
  EXPECT_EQ(pairs[0].reply, "hello");
  EXPECT_EQ(pairs[1].message, "yes");
  EXPECT_EQ(pairs[1].reply, "ok");
}

TEST(BuildPairs, SameSpeakerYieldsNothing) {
  const std::vector<SpeakerLine> script = {{"A", "hi"}, {"A", "again"}};
  EXPECT_TRUE(corpus::build_pairs(script).empty());
}

TEST(BuildPairs, RoundRobinScript) {
  std::vector<SpeakerLine> script;
  const char* names[] = {"A", "B", "C", "D"};
  for (int i = 0; i < 8; ++i) script.push_back({names[i % 4], "line"});
  EXPECT_EQ(corpus::build_pairs(script).size(), 7u);
}

TEST(BuildPairs, ShortScripts) {
  EXPECT_TRUE(corpus::build_pairs({}).empty());
  EXPECT_TRUE(corpus::build_pairs({{"A", "solo"}}).empty());
}

TEST(BuildPairs, CountsSpeakerBoundaries) {
  const std::vector<SpeakerLine> script = {
      {"A", "1"}, {"A", "2"}, {"B", "3"}, {"A", "4"}, {"A", "5"}, {"C", "6"}};
  std::size_t boundaries = 0;
  for (std::size_t i = 0; i + 1 < script.size(); ++i)
    if (script[i].speaker != script[i + 1].speaker) ++boundaries;
  EXPECT_EQ(corpus::build_pairs(script).size(), boundaries);
}

TEST(FilterSpeaker, SelectsMatchingLinesInOrder) {
  const std::vector<SpeakerLine> script = {
      {"Chandler", "one"}, {"Ross", "x"}, {"chandler", "two"}, {"Monica", "y"}, {"CHANDLER", "three"}};
  const auto out = corpus::filter_speaker(script, "Chandler");
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].text, "one");
  EXPECT_EQ(out[1].text, "two");
  EXPECT_EQ(out[2].text, "three");
}

TEST(FilterSpeaker, AbsentSpeaker) {
  const std::vector<SpeakerLine> script = {{"A", "x"}};
  EXPECT_TRUE(corpus::filter_speaker(script, "B").empty());
}

TEST(FilterSpeaker, AllMatchIsIdentity) {
  const std::vector<SpeakerLine> script = {{"A", "x"}, {"A", "y"}};
  const auto out = corpus::filter_speaker(script, "a");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].text, "y");
}

TEST(ParseScript, TabSeparatedLines) {
  std::istringstream is("A\thello there\nB\thi\r\n\nC\tlast one\n");
  const auto script = corpus::parse_script(is);
  ASSERT_EQ(script.size(), 3u);
  EXPECT_EQ(script[0].speaker, "A");
  EXPECT_EQ(script[0].text, "hello there");
  EXPECT_EQ(script[1].text, "hi");
  EXPECT_EQ(script[2].speaker, "C");
}

TEST(ParseScript, MalformedLineThrows) {
  std::istringstream missing_tab("A hello\n");
  EXPECT_THROW(corpus::parse_script(missing_tab), plm::DataError);
  std::istringstream empty_speaker("\ttext\n");
  EXPECT_THROW(corpus::parse_script(empty_speaker), plm::DataError);
}

TEST(EncodePairs, LayoutAndDropRules) {
  const auto v = corpus::build_vocab({toks({"hi", "there", "ok"})}, 10);
  const std::vector<corpus::MessageReplyText> raw = {
      {"hi there", "ok"}, {"...", ""}, {"", "ok"}, {"ok", "hi"}};
  const auto pairs = corpus::encode_pairs(raw, v);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1].message.ids.size(), 1u);
  EXPECT_FALSE(pairs[0].message.terminated);
  EXPECT_TRUE(pairs[0].reply.terminated);
  EXPECT_EQ(pairs[0].message.ids.size(), 2u);
  EXPECT_EQ(pairs[0].reply.ids.back(), Vocabulary::kEosId);
}

TEST(VocabularyIo, RoundTrip) {
  const auto v = corpus::build_vocab({toks({"beta", "alpha", "alpha"})}, 10);
  std::stringstream ss;
  corpus::save_vocabulary(v, ss);
  const auto loaded = corpus::load_vocabulary(ss);
  EXPECT_EQ(loaded.tokens(), v.tokens());
  EXPECT_EQ(loaded.fingerprint(), v.fingerprint());
}

TEST(VocabularyIo, RejectsMissingReservedHeader) {
  std::istringstream bad("alpha\nbeta\n");
  EXPECT_THROW(corpus::load_vocabulary(bad), plm::DataError);
}

TEST(Vocabulary, FingerprintDistinguishesContent) {
  const auto a = corpus::build_vocab({toks({"x"})}, 3);
  const auto b = corpus::build_vocab({toks({"y"})}, 3);
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Vocabulary, DuplicateContentThrows) {
  EXPECT_THROW(Vocabulary({"dup", "dup"}), plm::DataError);
}
