#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "plm/decode.hpp"
#include "plm/models.hpp"
#include "plm/train.hpp"

namespace net = plm::net;
namespace models = plm::models;
namespace corpus = plm::corpus;
using corpus::TokenSequence;

namespace {

TokenSequence seq(std::initializer_list<std::int32_t> ids, bool terminated) {
  TokenSequence s;
  s.ids = ids;
  s.terminated = terminated;
  return s;
}

TokenSequence sentence(std::initializer_list<std::int32_t> words) {
  TokenSequence s;
  s.ids = words;
  s.ids.push_back(corpus::Vocabulary::kEosId);
  s.terminated = true;
  return s;
}

bool params_equal(const net::ModelParams<double>& a, const net::ModelParams<double>& b) {
  if (net::param_count(a) != net::param_count(b)) return false;
  auto sa = net::collect_spans(a);
  auto sb = net::collect_spans(b);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].second.size() != sb[i].second.size()) return false;
    for (std::size_t k = 0; k < sa[i].second.size(); ++k)
      if (sa[i].second[k] != sb[i].second[k]) return false;
  }
  return true;
}

net::ModelParams<double> zero_params(std::size_t vocab, std::size_t embed, std::size_t hidden) {
  auto p = net::init_params<double>(vocab, embed, {hidden}, 1);
  net::visit_params(p, [](const net::BlockRef&, std::span<double> t) {
    for (auto& v : t) v = 0.0;
  });
  return p;
}

}  // namespace

TEST(LmSample, LayoutShiftsTargetsByOne) {
  const auto s = models::make_lm_sample(sentence({5, 3}));
  EXPECT_EQ(s.inputs, (std::vector<std::int32_t>{0, 5, 3}));
  EXPECT_EQ(s.targets, (std::vector<std::int32_t>{5, 3, 0}));
  EXPECT_EQ(s.loss_begin, 0u);
  EXPECT_EQ(s.loss_tokens(), 3u);
}

TEST(LmSample, RejectsUnterminatedSentence) {
  EXPECT_THROW(models::make_lm_sample(seq({5, 3}, false)), plm::DataError);
  EXPECT_THROW(models::make_lm_sample(seq({}, true)), plm::DataError);
}

TEST(ReplySample, BorderEosAndLossOnReplyOnly) {
  corpus::MessageReplyPair pair;
  pair.message = seq({4, 2}, false);
  pair.reply = seq({7, 0}, true);
  const auto s = models::make_reply_sample(pair);
  EXPECT_EQ(s.inputs, (std::vector<std::int32_t>{4, 2, 0, 7}));
  EXPECT_EQ(s.targets, (std::vector<std::int32_t>{2, 0, 7, 0}));
  EXPECT_EQ(s.loss_begin, 2u);
  EXPECT_EQ(s.loss_tokens(), 2u);
}

TEST(ReplySample, RejectsBadPairs) {
  corpus::MessageReplyPair no_msg;
  no_msg.reply = seq({3, 0}, true);
  EXPECT_THROW(models::make_reply_sample(no_msg), plm::DataError);
  corpus::MessageReplyPair open_reply;
  open_reply.message = seq({4}, false);
  open_reply.reply = seq({3}, false);
  EXPECT_THROW(models::make_reply_sample(open_reply), plm::DataError);
}

TEST(BatchSampleBuilders, PreserveCounts) {
  const std::vector<TokenSequence> sents = {sentence({2}), sentence({3, 4})};
  EXPECT_EQ(models::make_lm_samples(sents).size(), 2u);
  corpus::MessageReplyPair pair;
  pair.message = seq({2}, false);
  pair.reply = seq({3, 0}, true);
  EXPECT_EQ(models::make_reply_samples({pair, pair, pair}).size(), 3u);
}

TEST(Perplexity, UniformModelEqualsVocabSize) {
  const auto p = zero_params(50, 4, 4);
  const auto samples = models::make_lm_samples({sentence({2, 3, 4}), sentence({5})});
  EXPECT_NEAR(net::perplexity(p, samples), 50.0, 1e-9);
}

TEST(Perplexity, TokenWeightedAggregation) {
  const auto p = net::init_params<double>(9, 4, {4}, 3);
  const std::vector<net::Sample> samples =
      models::make_lm_samples({sentence({2, 3, 4, 5, 6}), sentence({7})});
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : samples) {
    nll += net::sample_nll_sum(p, s);
    tokens += s.loss_tokens();
  }
  EXPECT_DOUBLE_EQ(net::perplexity(p, samples), std::exp(nll / static_cast<double>(tokens)));
}

TEST(Perplexity, FreshInitNearVocabSize) {
  const auto p = net::init_params<double>(50, 8, {8}, 7);
  const auto samples = models::make_lm_samples(
      {sentence({2, 9, 17, 30}), sentence({44, 5, 21}), sentence({11, 12, 13, 14, 15})});
  const double ppl = net::perplexity(p, samples);
  EXPECT_GT(ppl, 25.0);
  EXPECT_LT(ppl, 100.0);
}

TEST(Perplexity, EmptyDatasetThrows) {
  const auto p = zero_params(5, 2, 2);
  EXPECT_THROW(net::perplexity(p, {}), plm::ConfigError);
}

TEST(Train, MemorizesRepeatedSentence) {
  auto p = net::init_params<double>(10, 8, {16}, 5);
  const auto one = models::make_lm_sample(sentence({2, 7, 3, 9, 4, 6}));
  const std::vector<net::Sample> data(20, one);
  net::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 11;
  cfg.batch_size = 1;
  cfg.lr_decay_start = 50;
  const auto trace = net::train(p, data, {}, cfg, net::all_trainable(p));
  ASSERT_EQ(trace.size(), 50u);
  EXPECT_LT(trace.back().train_ppl, 1.3);
}

TEST(Train, ZeroEpochsIsIdentity) {
  auto p = net::init_params<double>(8, 4, {4}, 9);
  const auto before = p;
  net::TrainConfig cfg;
  cfg.epochs = 0;
  const auto trace =
      net::train(p, models::make_lm_samples({sentence({2, 3})}), {}, cfg, net::all_trainable(p));
  EXPECT_TRUE(trace.empty());
  EXPECT_TRUE(params_equal(p, before));
}

TEST(Train, SameSeedBitIdenticalTraces) {
  const auto data = models::make_lm_samples(
      {sentence({2, 3, 4}), sentence({5, 6}), sentence({7, 2, 5, 3}), sentence({4, 4})});
  net::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.seed = 21;
  auto p1 = net::init_params<double>(8, 4, {4, 4}, 13);
  auto p2 = net::init_params<double>(8, 4, {4, 4}, 13);
  const auto t1 = net::train(p1, data, data, cfg, net::all_trainable(p1));
  const auto t2 = net::train(p2, data, data, cfg, net::all_trainable(p2));
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(t1[i].train_nll, t2[i].train_nll);
    EXPECT_EQ(t1[i].val_ppl, t2[i].val_ppl);
  }
  EXPECT_TRUE(params_equal(p1, p2));
}

TEST(Train, AllFrozenLeavesParamsAndPerplexityConstant) {
  auto p = net::init_params<double>(8, 4, {4}, 17);
  const auto before = p;
  const auto data = models::make_lm_samples({sentence({2, 3, 4}), sentence({5, 6})});
  net::TrainConfig cfg;
  cfg.epochs = 3;
  const auto trace = net::train(p, data, data, cfg, net::all_frozen(p));
  EXPECT_TRUE(params_equal(p, before));
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0].val_ppl, trace[1].val_ppl);
  EXPECT_EQ(trace[1].val_ppl, trace[2].val_ppl);
}

TEST(Train, SegmentedRunMatchesSingleRun) {
  const auto data = models::make_lm_samples(
      {sentence({2, 3, 4}), sentence({5, 6}), sentence({3, 7, 2}), sentence({6, 6, 4, 2})});
  net::TrainConfig whole;
  whole.epochs = 8;
  whole.batch_size = 2;
  whole.seed = 31;
  auto p1 = net::init_params<double>(8, 4, {4}, 19);
  const auto t_whole = net::train(p1, data, {}, whole, net::all_trainable(p1));

  auto p2 = net::init_params<double>(8, 4, {4}, 19);
  net::TrainConfig part = whole;
  part.epochs = 3;
  auto t_a = net::train(p2, data, {}, part, net::all_trainable(p2), 1);
  part.epochs = 5;
  auto t_b = net::train(p2, data, {}, part, net::all_trainable(p2), 4);

  EXPECT_TRUE(params_equal(p1, p2));
  ASSERT_EQ(t_a.size() + t_b.size(), t_whole.size());
  t_a.insert(t_a.end(), t_b.begin(), t_b.end());
  for (std::size_t i = 0; i < t_whole.size(); ++i) {
    EXPECT_EQ(t_a[i].epoch, t_whole[i].epoch);
    EXPECT_EQ(t_a[i].train_nll, t_whole[i].train_nll);
  }
}

TEST(Train, EmptyDatasetThrows) {
  auto p = net::init_params<double>(8, 4, {4}, 23);
  net::TrainConfig cfg;
  EXPECT_THROW(net::train(p, {}, {}, cfg, net::all_trainable(p)), plm::ConfigError);
}

TEST(TrainConfig, LearningRateSchedule) {
  net::TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr_at(1), 0.5);
  EXPECT_DOUBLE_EQ(cfg.lr_at(6), 0.5);
  EXPECT_DOUBLE_EQ(cfg.lr_at(7), 0.5 * 0.8);
  EXPECT_DOUBLE_EQ(cfg.lr_at(8), 0.5 * 0.8 * 0.8);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  net::TrainConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), plm::ConfigError);
  cfg = {};
  cfg.precision = 16;
  EXPECT_THROW(cfg.validate(), plm::ConfigError);
  cfg = {};
  cfg.validation_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), plm::ConfigError);
}

TEST(SplitSamples, SeededAndSizedCorrectly) {
  std::vector<net::Sample> samples(8, models::make_lm_sample(sentence({2})));
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i].targets.back() = static_cast<std::int32_t>(i % 3);
  const auto [train_a, val_a] = net::split_samples(samples, 0.25, 77);
  EXPECT_EQ(val_a.size(), 2u);
  EXPECT_EQ(train_a.size(), 6u);
  const auto [train_b, val_b] = net::split_samples(samples, 0.25, 77);
  for (std::size_t i = 0; i < val_a.size(); ++i)
    EXPECT_EQ(val_a[i].targets, val_b[i].targets);
  const auto [train_c, val_c] = net::split_samples(samples, 0.01, 1);
  EXPECT_EQ(val_c.size(), 1u);
  EXPECT_THROW(net::split_samples({samples[0]}, 0.5, 1), plm::ConfigError);
}

TEST(CompleteSentence, EosArgmaxTerminatesImmediately) {
  models::SentenceCompletionModel<double> m;
  m.params = zero_params(6, 3, 3);
  models::DecodeConfig cfg;
  const auto out = models::complete_sentence(m, seq({2, 3}, false), cfg);
  EXPECT_EQ(out.ids, (std::vector<std::int32_t>{2, 3, 0}));
  EXPECT_TRUE(out.terminated);
}

TEST(CompleteSentence, ReproducesMemorizedSentence) {
  auto p = net::init_params<double>(8, 8, {16}, 41);
  const auto target = sentence({2, 5, 3, 6, 4});
  net::TrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 42;
  cfg.batch_size = 1;
  cfg.lr_decay_start = 60;
  net::train(p, std::vector<net::Sample>(8, models::make_lm_sample(target)), {}, cfg,
             net::all_trainable(p));
  models::SentenceCompletionModel<double> m;
  m.params = std::move(p);
  const auto out = models::complete_sentence(m, seq({2, 5}, false), models::DecodeConfig{});
  EXPECT_EQ(out.ids, target.ids);
  EXPECT_TRUE(out.terminated);
}

TEST(CompleteSentence, MaxLenCapsGeneration) {
  models::SentenceCompletionModel<double> m;
  m.params = zero_params(6, 3, 3);
  m.params.b_out[2] = 10.0;  // argmax fixed on a non-eos word
  models::DecodeConfig cfg;
  cfg.max_len = 3;
  const auto out = models::complete_sentence(m, seq({4}, false), cfg);
  EXPECT_EQ(out.ids, (std::vector<std::int32_t>{4, 2, 2, 2}));
  EXPECT_FALSE(out.terminated);
}

TEST(CompleteSentence, StripsTrailingEosFromPrefix) {
  models::SentenceCompletionModel<double> m;
  m.params = net::init_params<double>(8, 4, {4}, 43);
  const auto a = models::complete_sentence(m, seq({2, 3}, false), models::DecodeConfig{});
  const auto b = models::complete_sentence(m, sentence({2, 3}), models::DecodeConfig{});
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_THROW(models::complete_sentence(m, seq({}, false), models::DecodeConfig{}),
               plm::DataError);
}

TEST(PredictReply, EosArgmaxGivesEmptyReply) {
  models::MessageReplyModel<double> m;
  m.params = zero_params(6, 3, 3);
  const auto out = models::predict_reply(m, seq({2, 4}, false), models::DecodeConfig{});
  EXPECT_EQ(out.ids, (std::vector<std::int32_t>{0}));
  EXPECT_TRUE(out.terminated);
}

TEST(PredictReply, ReproducesMemorizedReply) {
  corpus::MessageReplyPair pair;
  pair.message = seq({2, 6}, false);
  pair.reply = sentence({5, 3, 7});
  auto p = net::init_params<double>(9, 8, {16}, 47);
  net::TrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 48;
  cfg.batch_size = 1;
  cfg.lr_decay_start = 60;
  net::train(p, std::vector<net::Sample>(8, models::make_reply_sample(pair)), {}, cfg,
             net::all_trainable(p));
  models::MessageReplyModel<double> m;
  m.params = std::move(p);
  const auto out = models::predict_reply(m, pair.message, models::DecodeConfig{});
  EXPECT_EQ(out.ids, pair.reply.ids);
}

TEST(PredictReply, OnlyMessagePartIsConsumed) {
  models::MessageReplyModel<double> m;
  m.params = net::init_params<double>(9, 4, {4}, 53);
  const auto bare = models::predict_reply(m, seq({3, 4}, false), models::DecodeConfig{});
  const auto terminated = models::predict_reply(m, sentence({3, 4}), models::DecodeConfig{});
  EXPECT_EQ(bare.ids, terminated.ids);
}

TEST(Decode, SampledModeIsSeededDeterministic) {
  models::MessageReplyModel<double> m;
  m.params = net::init_params<double>(9, 4, {4}, 59);
  models::DecodeConfig cfg;
  cfg.mode = models::DecodeMode::kSampled;
  cfg.temperature = 0.8;
  cfg.seed = 5;
  const auto a = models::predict_reply(m, seq({2, 7}, false), cfg);
  const auto b = models::predict_reply(m, seq({2, 7}, false), cfg);
  EXPECT_EQ(a.ids, b.ids);
}

TEST(Decode, ConfigValidation) {
  models::MessageReplyModel<double> m;
  m.params = zero_params(6, 3, 3);
  models::DecodeConfig bad;
  bad.max_len = 0;
  EXPECT_THROW(models::predict_reply(m, seq({2}, false), bad), plm::ConfigError);
  bad = {};
  bad.temperature = 0.0;
  bad.mode = models::DecodeMode::kSampled;
  EXPECT_THROW(models::predict_reply(m, seq({2}, false), bad), plm::ConfigError);
}

TEST(BatchGenerate, EmptyAndOrderContracts) {
  models::MessageReplyModel<double> m;
  m.params = net::init_params<double>(9, 4, {4}, 61);
  models::DecodeConfig cfg;
  EXPECT_TRUE(models::batch_generate(m, std::vector<TokenSequence>{}, cfg).empty());
  const std::vector<TokenSequence> msgs = {seq({2, 3}, false), seq({7}, false), seq({4, 5, 6}, false)};
  const auto fwd = models::batch_generate(m, msgs, cfg);
  ASSERT_EQ(fwd.size(), 3u);
  const std::vector<TokenSequence> rev = {msgs[2], msgs[1], msgs[0]};
  const auto bwd = models::batch_generate(m, rev, cfg);
  EXPECT_EQ(fwd[0].ids, bwd[2].ids);
  EXPECT_EQ(fwd[1].ids, bwd[1].ids);
  EXPECT_EQ(fwd[2].ids, bwd[0].ids);
}
