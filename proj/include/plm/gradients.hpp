#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "plm/mask.hpp"
#include "plm/model.hpp"

namespace plm::net {

namespace detail {

// Advance the recurrent state over tokens without keeping caches (used for
// stretches of a sequence that carry no loss, and between BPTT windows).
template <typename S>
void advance_state(const ModelParams<S>& p, std::span<const std::int32_t> inputs,
                   LstmState<S>& state) {
  Vector<S> top;
  for (auto id : inputs) top_forward(p, id, state, static_cast<StepCache<S>*>(nullptr), top);
}

// The vector that fed the output projection at one cached step.
template <typename S>
std::span<const S> top_vector(const ModelParams<S>& p, const StepCache<S>& sc) {
  if (p.has_surplus()) {
    if (p.surplus_kind() == SurplusKind::kAffine) return sc.surplus_out;
    return sc.surplus_cell.h;
  }
  return sc.layers.back().h;
}

struct WindowStats {
  double nll_sum = 0.0;
  std::size_t tokens = 0;
};

// Forward + backward over one unrolled window.  `initial` is the recurrent
// state entering the window; gradients of the SUM of the window's NLL
// accumulate into `grads`.  All parameter blocks are accumulated here; the
// caller applies the trainable mask.
template <typename S>
WindowStats bptt_window(const ModelParams<S>& p, std::span<const std::int32_t> inputs,
                        std::span<const std::int32_t> targets, std::size_t loss_begin,
                        const LstmState<S>& initial, LstmState<S>* end_state,
                        ModelParams<S>& grads) {
  const std::size_t T = inputs.size();
  const std::size_t L = p.lstm_layers.size();
  const std::size_t V = p.vocab_size();
  WindowStats stats;

  // -- forward, caching activations ----------------------------------------
  LstmState<S> state = initial;
  std::vector<StepCache<S>> steps(T);
  Vector<S> top, logits;
  for (std::size_t t = 0; t < T; ++t) {
    top_forward(p, inputs[t], state, &steps[t], top);
    logits = p.b_out;
    matvec_add<S>(p.w_out, top, logits);
    const double lse = log_sum_exp<S>(logits);
    steps[t].probs.resize(V);
    for (std::size_t i = 0; i < V; ++i)
      steps[t].probs[i] = static_cast<S>(std::exp(static_cast<double>(logits[i]) - lse));
    if (t >= loss_begin) {
      const auto target = static_cast<std::size_t>(targets[t]);
      if (target >= V) throw DataError("bptt: target id out of range");
      steps[t].logp_target = static_cast<double>(logits[target]) - lse;
      stats.nll_sum -= steps[t].logp_target;
      ++stats.tokens;
    }
  }
  if (end_state) *end_state = state;

  // -- backward through time ------------------------------------------------
  std::vector<Vector<S>> dh(L), dc(L);
  for (std::size_t l = 0; l < L; ++l) {
    dh[l].assign(p.lstm_layers[l].hidden(), S(0));
    dc[l].assign(p.lstm_layers[l].hidden(), S(0));
  }
  const bool lstm_surplus = p.has_lstm_surplus();
  Vector<S> dh_s, dc_s;
  if (lstm_surplus) {
    const auto& sp = std::get<LstmLayerParams<S>>(*p.surplus);
    dh_s.assign(sp.hidden(), S(0));
    dc_s.assign(sp.hidden(), S(0));
  }

  Vector<S> dlogits(V), d_top, d_flow, d_below, dh_new, dc_new;
  for (std::size_t ti = T; ti-- > 0;) {
    const StepCache<S>& sc = steps[ti];
    d_top.assign(p.top_width(), S(0));
    if (ti >= loss_begin) {
      dlogits = sc.probs;
      dlogits[static_cast<std::size_t>(targets[ti])] -= S(1);
      const auto tv = top_vector(p, sc);
      outer_add<S>(dlogits, tv, grads.w_out);
      axpy<S>(S(1), dlogits, grads.b_out);
      matvec_transpose_add<S>(p.w_out, dlogits, d_top);
    }

    // surplus block
    if (p.has_surplus()) {
      if (p.surplus_kind() == SurplusKind::kAffine) {
        const auto& a = std::get<AffineSurplus<S>>(*p.surplus);
        auto& ga = std::get<AffineSurplus<S>>(*grads.surplus);
        std::span<const S> x_last = sc.layers.back().h;
        outer_add<S>(d_top, x_last, ga.weight);
        axpy<S>(S(1), d_top, ga.bias);
        d_flow.assign(x_last.size(), S(0));
        matvec_transpose_add<S>(a.weight, d_top, d_flow);
      } else {
        const auto& sp = std::get<LstmLayerParams<S>>(*p.surplus);
        auto& gs = std::get<LstmLayerParams<S>>(*grads.surplus);
        axpy<S>(S(1), dh_s, d_top);  // recurrent flow joins the output flow
        std::span<const S> x_last = sc.layers.back().h;
        std::span<const S> h_prev = ti > 0 ? std::span<const S>(steps[ti - 1].surplus_cell.h)
                                           : std::span<const S>(initial.h.back());
        std::span<const S> c_prev = ti > 0 ? std::span<const S>(steps[ti - 1].surplus_cell.c)
                                           : std::span<const S>(initial.c.back());
        d_flow.assign(x_last.size(), S(0));
        dh_new.assign(sp.hidden(), S(0));
        dc_new.assign(sp.hidden(), S(0));
        lstm_cell_backward<S>(sp, sc.surplus_cell, x_last, h_prev, c_prev, d_top, dc_s, gs,
                              d_flow, dh_new, dc_new);
        dh_s = dh_new;
        dc_s = dc_new;
      }
    } else {
      d_flow = std::move(d_top);
    }

    // LSTM stack, top layer first
    for (std::size_t li = L; li-- > 0;) {
      axpy<S>(S(1), dh[li], d_flow);  // recurrent flow into this layer's h
      std::span<const S> x_l =
          li > 0 ? std::span<const S>(sc.layers[li - 1].h)
                 : std::span<const S>(p.embedding.row(static_cast<std::size_t>(inputs[ti])),
                                      p.embed_dim());
      std::span<const S> h_prev = ti > 0 ? std::span<const S>(steps[ti - 1].layers[li].h)
                                         : std::span<const S>(initial.h[li]);
      std::span<const S> c_prev = ti > 0 ? std::span<const S>(steps[ti - 1].layers[li].c)
                                         : std::span<const S>(initial.c[li]);
      d_below.assign(x_l.size(), S(0));
      dh_new.assign(p.lstm_layers[li].hidden(), S(0));
      dc_new.assign(p.lstm_layers[li].hidden(), S(0));
      lstm_cell_backward<S>(p.lstm_layers[li], sc.layers[li], x_l, h_prev, c_prev, d_flow,
                            dc[li], grads.lstm_layers[li], d_below, dh_new, dc_new);
      dh[li] = dh_new;
      dc[li] = dc_new;
      d_flow = std::move(d_below);
    }

    // embedding row of this step's input
    S* erow = grads.embedding.row(static_cast<std::size_t>(inputs[ti]));
    for (std::size_t j = 0; j < d_flow.size(); ++j) erow[j] += d_flow[j];
  }
  return stats;
}

// Split a sample into BPTT windows of at most `cap` steps (state carries
// across windows, gradients do not), accumulating sum-NLL gradients.
template <typename S>
WindowStats accumulate_sample_gradients(const ModelParams<S>& p, const Sample& s,
                                        std::size_t cap, ModelParams<S>& grads) {
  if (s.inputs.size() != s.targets.size() || s.inputs.empty())
    throw ShapeError("bptt: inputs and targets must be aligned and non-empty");
  if (s.loss_begin >= s.inputs.size())
    throw ShapeError("bptt: loss window is empty");
  if (cap == 0) throw ConfigError("bptt: window cap must be >= 1");

  WindowStats total;
  LstmState<S> state = init_state(p);
  std::size_t pos = 0;
  const std::size_t T = s.inputs.size();
  while (pos < T) {
    const std::size_t len = std::min(cap, T - pos);
    std::span<const std::int32_t> in(s.inputs.data() + pos, len);
    std::span<const std::int32_t> tg(s.targets.data() + pos, len);
    if (s.loss_begin >= pos + len) {
      advance_state(p, in, state);  // pure context, nothing to learn from yet
    } else {
      const std::size_t lb = s.loss_begin > pos ? s.loss_begin - pos : 0;
      LstmState<S> end;
      const WindowStats w = bptt_window(p, in, tg, lb, state, &end, grads);
      total.nll_sum += w.nll_sum;
      total.tokens += w.tokens;
      state = std::move(end);
    }
    pos += len;
  }
  return total;
}

}  // namespace detail

template <typename S>
struct BpttResult {
  double loss = 0.0;  // mean NLL over the loss window, nats per token
  ModelParams<S> grads;
};

// Gradients of the mean NLL w.r.t. every trainable block; frozen blocks come
// back exactly zero.  Loss positions start at sample.loss_begin (0 for plain
// language modelling, the reply offset for message-reply pairs).
template <typename S>
BpttResult<S> backward_bptt(const ModelParams<S>& p, const Sample& s, const TrainableMask& mask,
                            std::size_t bptt_cap = 64) {
  check_mask(mask, p);
  BpttResult<S> out;
  out.grads = zeros_like(p);
  const auto stats = detail::accumulate_sample_gradients(p, s, bptt_cap, out.grads);
  const S inv = S(1) / static_cast<S>(stats.tokens);
  visit_params(out.grads, [&](const BlockRef&, std::span<S> t) {
    for (auto& v : t) v *= inv;
  });
  apply_mask(out.grads, mask);
  out.loss = stats.nll_sum / static_cast<double>(stats.tokens);
  return out;
}

template <typename S>
BpttResult<S> backward_bptt(const ModelParams<S>& p, const std::vector<std::int32_t>& inputs,
                            const std::vector<std::int32_t>& targets, const TrainableMask& mask,
                            std::size_t bptt_cap = 64) {
  Sample s;
  s.inputs = inputs;
  s.targets = targets;
  return backward_bptt(p, s, mask, bptt_cap);
}

}  // namespace plm::net
