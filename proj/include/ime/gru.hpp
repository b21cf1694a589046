#pragma once

#include <string>
#include <vector>

#include "ime/graph.hpp"

namespace ime::diff {

/// Gated recurrent unit weights, PyTorch gate convention. Input weights are
/// [d_in x d_h], recurrent weights [d_h x d_h], biases [1 x d_h].
struct GruParams {
  Parameter w_ir, w_iz, w_in;
  Parameter w_hr, w_hz, w_hn;
  Parameter b_ir, b_iz, b_in;
  Parameter b_hr, b_hz, b_hn;

  static GruParams zeros(const std::string& prefix, std::size_t d_in, std::size_t d_h);

  std::size_t input_dim() const { return w_ir.value.shape()[0]; }
  std::size_t hidden_dim() const { return w_ir.value.shape()[1]; }
  std::vector<Parameter*> parameters();
};

/// One step on a batch: x is [B x d_in], h_prev is [B x d_h].
///   r = sig(x W_ir + b_ir + h W_hr + b_hr)
///   z = sig(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
Var gru_cell(Graph& g, Var x, Var h_prev, GruParams& params);

}  // namespace ime::diff
