#pragma once

#include <cmath>
#include <span>

#include "plm/matrix.hpp"

namespace plm::net {

// One LSTM layer without peephole connections.  Gate pre-activations are
// stacked row blocks in the fixed order (input, forget, cell-candidate,
// output); the checkpoint format documents this as gate order "ifgo".
template <typename S>
struct LstmLayerParams {
  Matrix<S> w_input;      // [4H x D_in]
  Matrix<S> w_recurrent;  // [4H x H]
  Vector<S> bias;         // [4H]

  std::size_t hidden() const { return w_recurrent.cols; }
  std::size_t input_dim() const { return w_input.cols; }
};

// Per-step activations kept for backpropagation through time.
template <typename S>
struct LstmCellCache {
  Vector<S> gates;   // [4H] post-activation: i, f, g, o
  Vector<S> c;       // [H] new cell state
  Vector<S> tanh_c;  // [H]
  Vector<S> h;       // [H] new hidden state
};

// h', c' from one step.  i,f,o = sigmoid, g = tanh, c' = f*c + i*g,
// h' = o * tanh(c').
template <typename S>
void lstm_cell_forward(const LstmLayerParams<S>& p, std::span<const S> x,
                       std::span<const S> h_prev, std::span<const S> c_prev,
                       LstmCellCache<S>& out) {
  const std::size_t h = p.hidden();
  detail::require(x.size() == p.input_dim() && h_prev.size() == h && c_prev.size() == h,
                  "lstm_cell_forward: dimension mismatch");
  out.gates.assign(p.bias.begin(), p.bias.end());
  std::span<S> gates(out.gates);
  matvec_add(p.w_input, x, gates);
  matvec_add(p.w_recurrent, h_prev, gates);
  for (std::size_t k = 0; k < h; ++k) {
    gates[0 * h + k] = sigmoid(gates[0 * h + k]);       // i
    gates[1 * h + k] = sigmoid(gates[1 * h + k]);       // f
    gates[2 * h + k] = std::tanh(gates[2 * h + k]);     // g
    gates[3 * h + k] = sigmoid(gates[3 * h + k]);       // o
  }
  out.c.resize(h);
  out.tanh_c.resize(h);
  out.h.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    out.c[k] = gates[1 * h + k] * c_prev[k] + gates[0 * h + k] * gates[2 * h + k];
    out.tanh_c[k] = std::tanh(out.c[k]);
    out.h[k] = gates[3 * h + k] * out.tanh_c[k];
  }
}

// Backward through one step.  dh/dc carry the gradients arriving at this
// step's outputs; on return dh_prev/dc_prev hold the gradients flowing to
// the previous step and dx the gradient w.r.t. this step's input.  Parameter
// gradients accumulate into `grad`.
template <typename S>
void lstm_cell_backward(const LstmLayerParams<S>& p, const LstmCellCache<S>& cache,
                        std::span<const S> x, std::span<const S> h_prev,
                        std::span<const S> c_prev, std::span<const S> dh,
                        std::span<const S> dc, LstmLayerParams<S>& grad, std::span<S> dx,
                        std::span<S> dh_prev, std::span<S> dc_prev) {
  const std::size_t h = p.hidden();
  Vector<S> da(4 * h);
  Vector<S> dc_total(h);
  for (std::size_t k = 0; k < h; ++k) {
    const S i = cache.gates[0 * h + k];
    const S f = cache.gates[1 * h + k];
    const S g = cache.gates[2 * h + k];
    const S o = cache.gates[3 * h + k];
    const S tc = cache.tanh_c[k];
    dc_total[k] = dc[k] + dh[k] * o * (S(1) - tc * tc);
    const S d_o = dh[k] * tc;
    da[3 * h + k] = d_o * o * (S(1) - o);
    const S d_i = dc_total[k] * g;
    da[0 * h + k] = d_i * i * (S(1) - i);
    const S d_f = dc_total[k] * c_prev[k];
    da[1 * h + k] = d_f * f * (S(1) - f);
    const S d_g = dc_total[k] * i;
    da[2 * h + k] = d_g * (S(1) - g * g);
    dc_prev[k] = dc_total[k] * f;
  }
  std::span<const S> das(da);
  outer_add(das, x, grad.w_input);
  outer_add(das, h_prev, grad.w_recurrent);
  axpy(S(1), das, std::span<S>(grad.bias));
  matvec_transpose_add(p.w_input, das, dx);
  matvec_transpose_add(p.w_recurrent, das, dh_prev);
}

}  // namespace plm::net
