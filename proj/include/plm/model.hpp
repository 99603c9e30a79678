#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plm/error.hpp"
#include "plm/lstm.hpp"
#include "plm/matrix.hpp"
#include "plm/rng.hpp"

namespace plm::net {

enum class SurplusKind { kAffine, kLstm };

// Affine bridge between the top LSTM layer and the output projection,
// s = W*h + b with no nonlinearity.  Initialized to the exact identity so a
// freshly inserted block leaves the model's outputs untouched.
template <typename S>
struct AffineSurplus {
  Matrix<S> weight;  // [H x H]
  Vector<S> bias;    // [H]
};

// The surplus block is either the affine bridge or a full extra LSTM layer.
template <typename S>
using SurplusVariant = std::variant<AffineSurplus<S>, LstmLayerParams<S>>;

template <typename S>
struct ModelParams {
  using value_type = S;

  Matrix<S> embedding;  // [V x D_e]
  std::vector<LstmLayerParams<S>> lstm_layers;
  std::optional<SurplusVariant<S>> surplus;
  Matrix<S> w_out;  // [V x H_top]
  Vector<S> b_out;  // [V]

  std::size_t vocab_size() const { return embedding.rows; }
  std::size_t embed_dim() const { return embedding.cols; }
  std::size_t top_width() const { return w_out.cols; }
  bool has_surplus() const { return surplus.has_value(); }
  bool has_lstm_surplus() const {
    return surplus && std::holds_alternative<LstmLayerParams<S>>(*surplus);
  }
  SurplusKind surplus_kind() const {
    return std::holds_alternative<AffineSurplus<S>>(*surplus) ? SurplusKind::kAffine
                                                              : SurplusKind::kLstm;
  }
  // Number of recurrent layers carrying state (incl. an LSTM surplus).
  std::size_t recurrent_layers() const { return lstm_layers.size() + (has_lstm_surplus() ? 1 : 0); }
};

// ---------------------------------------------------------------------------
// Parameter-block traversal.  Every tensor of the model is visited in the
// declared, stable order; the same order defines the checkpoint payload
// layout and the gradient-store layout.
// ---------------------------------------------------------------------------

enum class BlockKind { kEmbedding, kLstm, kSurplus, kOutput };

struct BlockRef {
  BlockKind kind;
  std::size_t layer;   // meaningful for kLstm
  const char* tensor;  // e.g. "w_input"
};

inline std::string block_name(const BlockRef& b) {
  switch (b.kind) {
    case BlockKind::kEmbedding: return "embedding";
    case BlockKind::kLstm: return "lstm" + std::to_string(b.layer + 1) + "." + b.tensor;
    case BlockKind::kSurplus: return std::string("surplus.") + b.tensor;
    case BlockKind::kOutput: return std::string("output.") + b.tensor;
  }
  return "?";
}

// f(BlockRef, span<S>) over every tensor, in checkpoint order.
template <typename Params, typename F>
void visit_params(Params&& p, F&& f) {
  f(BlockRef{BlockKind::kEmbedding, 0, "weight"}, p.embedding.flat());
  for (std::size_t l = 0; l < p.lstm_layers.size(); ++l) {
    auto& layer = p.lstm_layers[l];
    f(BlockRef{BlockKind::kLstm, l, "w_input"}, layer.w_input.flat());
    f(BlockRef{BlockKind::kLstm, l, "w_recurrent"}, layer.w_recurrent.flat());
    f(BlockRef{BlockKind::kLstm, l, "bias"}, std::span(layer.bias));
  }
  if (p.surplus) {
    std::visit(
        [&](auto& block) {
          using T = std::decay_t<decltype(block)>;
          if constexpr (std::is_same_v<T, AffineSurplus<typename std::decay_t<Params>::value_type>>) {
            f(BlockRef{BlockKind::kSurplus, 0, "weight"}, block.weight.flat());
            f(BlockRef{BlockKind::kSurplus, 0, "bias"}, std::span(block.bias));
          } else {
            f(BlockRef{BlockKind::kSurplus, 0, "w_input"}, block.w_input.flat());
            f(BlockRef{BlockKind::kSurplus, 0, "w_recurrent"}, block.w_recurrent.flat());
            f(BlockRef{BlockKind::kSurplus, 0, "bias"}, std::span(block.bias));
          }
        },
        *p.surplus);
  }
  f(BlockRef{BlockKind::kOutput, 0, "weight"}, p.w_out.flat());
  f(BlockRef{BlockKind::kOutput, 0, "bias"}, std::span(p.b_out));
}

template <typename S>
std::size_t param_count(const ModelParams<S>& p) {
  std::size_t n = 0;
  visit_params(p, [&](const BlockRef&, std::span<const S> t) { n += t.size(); });
  return n;
}

template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& p) {
  ModelParams<S> z = p;
  visit_params(z, [](const BlockRef&, std::span<S> t) { fill(t, S(0)); });
  return z;
}

template <typename S>
void set_zero(ModelParams<S>& p) {
  visit_params(p, [](const BlockRef&, std::span<S> t) { fill(t, S(0)); });
}

// Flattened view of every tensor, in checkpoint order.  Lets two stores with
// the same architecture be walked in lockstep.
template <typename S>
std::vector<std::pair<BlockRef, std::span<S>>> collect_spans(ModelParams<S>& p) {
  std::vector<std::pair<BlockRef, std::span<S>>> out;
  visit_params(p, [&](const BlockRef& b, std::span<S> t) { out.emplace_back(b, t); });
  return out;
}

template <typename S>
std::vector<std::pair<BlockRef, std::span<const S>>> collect_spans(const ModelParams<S>& p) {
  std::vector<std::pair<BlockRef, std::span<const S>>> out;
  visit_params(p, [&](const BlockRef& b, std::span<const S> t) { out.emplace_back(b, t); });
  return out;
}

// Uniform init in [-0.08, 0.08] with the forget-gate bias raised to +1.
template <typename S>
ModelParams<S> init_params(std::size_t vocab, std::size_t embed_dim,
                           const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  if (vocab < 2 || embed_dim == 0 || hidden.empty())
    throw ConfigError("init_params: need vocab >= 2, embed_dim > 0 and at least one layer");
  ModelParams<S> p;
  p.embedding = Matrix<S>(vocab, embed_dim);
  std::size_t in = embed_dim;
  for (std::size_t h : hidden) {
    LstmLayerParams<S> layer;
    layer.w_input = Matrix<S>(4 * h, in);
    layer.w_recurrent = Matrix<S>(4 * h, h);
    layer.bias = Vector<S>(4 * h, S(0));
    p.lstm_layers.push_back(std::move(layer));
    in = h;
  }
  p.w_out = Matrix<S>(vocab, in);
  p.b_out = Vector<S>(vocab, S(0));

  Rng rng(seed);
  visit_params(p, [&](const BlockRef&, std::span<S> t) {
    for (auto& v : t) v = static_cast<S>(rng.uniform(-0.08, 0.08));
  });
  for (auto& layer : p.lstm_layers) {
    const std::size_t h = layer.hidden();
    for (std::size_t k = 0; k < h; ++k) layer.bias[h + k] = S(1);  // forget gate
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

// Hidden and cell vectors for each recurrent layer; an LSTM surplus occupies
// the last slot.
template <typename S>
struct LstmState {
  std::vector<Vector<S>> h, c;
};

template <typename S>
LstmState<S> init_state(const ModelParams<S>& p) {
  LstmState<S> s;
  const std::size_t n = p.recurrent_layers();
  s.h.resize(n);
  s.c.resize(n);
  for (std::size_t l = 0; l < p.lstm_layers.size(); ++l) {
    s.h[l].assign(p.lstm_layers[l].hidden(), S(0));
    s.c[l].assign(p.lstm_layers[l].hidden(), S(0));
  }
  if (p.has_lstm_surplus()) {
    const auto& sp = std::get<LstmLayerParams<S>>(*p.surplus);
    s.h.back().assign(sp.hidden(), S(0));
    s.c.back().assign(sp.hidden(), S(0));
  }
  return s;
}

// Activations of one time step kept for BPTT.
template <typename S>
struct StepCache {
  std::vector<LstmCellCache<S>> layers;
  LstmCellCache<S> surplus_cell;  // lstm surplus only
  Vector<S> surplus_out;          // affine surplus only
  Vector<S> probs;                // [V]
  double logp_target = 0.0;
};

namespace detail {

// Runs embedding -> LSTM stack -> surplus for one token; leaves the vector
// feeding the output projection in `top` and advances `state`.
template <typename S>
void top_forward(const ModelParams<S>& p, std::int32_t id, LstmState<S>& state,
                 StepCache<S>* cache, Vector<S>& top) {
  if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size())
    throw DataError("forward: token id " + std::to_string(id) + " out of range for V=" +
                    std::to_string(p.vocab_size()));
  const S* e = p.embedding.row(static_cast<std::size_t>(id));
  Vector<S> x(e, e + p.embed_dim());
  LstmCellCache<S> cc;
  for (std::size_t l = 0; l < p.lstm_layers.size(); ++l) {
    lstm_cell_forward<S>(p.lstm_layers[l], x, state.h[l], state.c[l], cc);
    state.h[l] = cc.h;
    state.c[l] = cc.c;
    x = cc.h;
    if (cache) cache->layers.push_back(std::move(cc));
    cc = {};
  }
  if (p.surplus) {
    if (p.surplus_kind() == SurplusKind::kAffine) {
      const auto& a = std::get<AffineSurplus<S>>(*p.surplus);
      Vector<S> s(a.bias);
      matvec_add<S>(a.weight, x, s);
      if (cache) cache->surplus_out = s;
      x = std::move(s);
    } else {
      const auto& sp = std::get<LstmLayerParams<S>>(*p.surplus);
      const std::size_t sl = state.h.size() - 1;
      lstm_cell_forward<S>(sp, x, state.h[sl], state.c[sl], cc);
      state.h[sl] = cc.h;
      state.c[sl] = cc.c;
      x = cc.h;
      if (cache) cache->surplus_cell = std::move(cc);
    }
  }
  top = std::move(x);
}

template <typename S>
double log_sum_exp(std::span<const S> v) {
  S mx = v[0];
  for (S x : v) mx = std::max(mx, x);
  double acc = 0.0;
  for (S x : v) acc += std::exp(static_cast<double>(x - mx));
  return static_cast<double>(mx) + std::log(acc);
}

}  // namespace detail

// One streaming step: advances `state`, writes the next-word distribution.
// forward_lm is exactly a loop of these, so batch and streaming evaluation
// agree bit for bit.
template <typename S>
void forward_step(const ModelParams<S>& p, std::int32_t id, LstmState<S>& state,
                  Vector<S>& probs) {
  Vector<S> top;
  detail::top_forward(p, id, state, static_cast<StepCache<S>*>(nullptr), top);
  Vector<S> logits(p.b_out);
  matvec_add<S>(p.w_out, top, logits);
  const double lse = detail::log_sum_exp<S>(logits);
  probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    probs[i] = static_cast<S>(std::exp(static_cast<double>(logits[i]) - lse));
}

// Per-step next-word distributions for the whole input sequence, rows sum
// to one (log-sum-exp stabilized softmax).
template <typename S>
Matrix<S> forward_lm(const ModelParams<S>& p, std::span<const std::int32_t> inputs) {
  Matrix<S> rows(inputs.size(), p.vocab_size());
  LstmState<S> state = init_state(p);
  Vector<S> probs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    forward_step(p, inputs[t], state, probs);
    std::copy(probs.begin(), probs.end(), rows.row(t));
  }
  return rows;
}

// Mean negative log likelihood in nats per target token.  A zero probability
// at a target yields +infinity rather than an exception.
template <typename S>
double nll_loss(const Matrix<S>& prob_rows, std::span<const std::int32_t> targets) {
  if (prob_rows.rows != targets.size())
    throw ShapeError("nll_loss: row count must equal target count");
  if (targets.empty()) throw ConfigError("nll_loss: empty targets");
  double acc = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto id = targets[t];
    if (id < 0 || static_cast<std::size_t>(id) >= prob_rows.cols)
      throw DataError("nll_loss: target id out of range");
    const double pt = static_cast<double>(prob_rows.at(t, static_cast<std::size_t>(id)));
    acc -= std::log(pt);  // log(0) == -inf maps to +inf loss
  }
  return acc / static_cast<double>(targets.size());
}

// ---------------------------------------------------------------------------
// Training samples
// ---------------------------------------------------------------------------

// Aligned input/target id rows.  Positions before `loss_begin` condition the
// model but contribute no loss (the message part of a message-reply pair).
struct Sample {
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  std::size_t loss_begin = 0;

  std::size_t loss_tokens() const { return inputs.size() - loss_begin; }
};

// Mean NLL of one sample without building gradient caches; shared by
// validation, perplexity and the finite-difference checker.
template <typename S>
double sample_nll_sum(const ModelParams<S>& p, const Sample& s) {
  if (s.inputs.size() != s.targets.size() || s.loss_begin >= s.inputs.size())
    throw ShapeError("sample: inputs/targets misaligned or empty loss window");
  LstmState<S> state = init_state(p);
  Vector<S> top, logits;
  double acc = 0.0;
  for (std::size_t t = 0; t < s.inputs.size(); ++t) {
    detail::top_forward(p, s.inputs[t], state, static_cast<StepCache<S>*>(nullptr), top);
    if (t < s.loss_begin) continue;
    logits = p.b_out;
    matvec_add<S>(p.w_out, top, logits);
    const double lse = detail::log_sum_exp<S>(logits);
    acc += lse - static_cast<double>(logits[static_cast<std::size_t>(s.targets[t])]);
  }
  return acc;
}

template <typename S>
double sample_mean_nll(const ModelParams<S>& p, const Sample& s) {
  return sample_nll_sum(p, s) / static_cast<double>(s.loss_tokens());
}

}  // namespace plm::net
