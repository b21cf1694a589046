#include "ime/gru.hpp"

#include "ime/error.hpp"

namespace ime::diff {

GruParams GruParams::zeros(const std::string& prefix, std::size_t d_in, std::size_t d_h) {
  auto mat = [&](const char* n, std::size_t r, std::size_t c) {
    return Parameter(prefix + "." + n, Tensor({r, c}));
  };
  return GruParams{mat("w_ir", d_in, d_h), mat("w_iz", d_in, d_h), mat("w_in", d_in, d_h),
                   mat("w_hr", d_h, d_h),  mat("w_hz", d_h, d_h),  mat("w_hn", d_h, d_h),
                   mat("b_ir", 1, d_h),    mat("b_iz", 1, d_h),    mat("b_in", 1, d_h),
                   mat("b_hr", 1, d_h),    mat("b_hz", 1, d_h),    mat("b_hn", 1, d_h)};
}

std::vector<Parameter*> GruParams::parameters() {
  return {&w_ir, &w_iz, &w_in, &w_hr, &w_hz, &w_hn, &b_ir, &b_iz, &b_in, &b_hr, &b_hz, &b_hn};
}

Var gru_cell(Graph& g, Var x, Var h_prev, GruParams& p) {
  const auto& xs = x.shape();
  const auto& hs = h_prev.shape();
  if (xs.size() != 2 || hs.size() != 2 || xs[0] != hs[0] || xs[1] != p.input_dim() ||
      hs[1] != p.hidden_dim()) {
    throw ShapeError("gru_cell: input " + shape_string(xs) + " / state " + shape_string(hs) +
                     " incompatible with d_in=" + std::to_string(p.input_dim()) +
                     ", d_h=" + std::to_string(p.hidden_dim()));
  }
  const std::size_t batch = xs[0];
  auto bias = [&](Parameter& b) {
    Var v = g.parameter(b);
    return batch == 1 ? v : broadcast_rows(v, batch);
  };
  auto gate = [&](Parameter& wi, Parameter& bi, Parameter& wh, Parameter& bh) {
    return sigmoid(add(add(matmul(x, g.parameter(wi)), bias(bi)),
                       add(matmul(h_prev, g.parameter(wh)), bias(bh))));
  };
  Var r = gate(p.w_ir, p.b_ir, p.w_hr, p.b_hr);
  Var z = gate(p.w_iz, p.b_iz, p.w_hz, p.b_hz);
  Var hn = add(matmul(h_prev, g.parameter(p.w_hn)), bias(p.b_hn));
  Var n = tanh(add(add(matmul(x, g.parameter(p.w_in)), bias(p.b_in)), mul(r, hn)));
  return add(n, mul(z, sub(h_prev, n)));
}

}  // namespace ime::diff
