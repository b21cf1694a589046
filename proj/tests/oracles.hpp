#pragma once

// Plain-loop reference computations. Nothing here touches the autodiff graph;
// model parameters are read as raw numbers only.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "ime/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[row][col]

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat to_mat(const ime::diff::Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline ime::diff::Tensor to_tensor(const Mat& m) {
  ime::diff::Tensor t({m.size(), m.empty() ? 0 : m[0].size()});
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) t.at(r, c) = m[r][c];
  return t;
}

inline Mat random_mat(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(rows, Vec(cols));
  for (auto& row : m)
    for (double& v : row) v = u(rng);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---- losses ---------------------------------------------------------------------

inline double cross_entropy(const Vec& scores, std::size_t target) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return -(scores[target] - mx - std::log(z));
}

inline double cmd(const Mat& x, const Mat& y, int order, double a, double b) {
  const std::size_t d = x[0].size();
  auto mean_col = [](const Mat& m, std::size_t c) {
    double s = 0.0;
    for (const auto& row : m) s += row[c];
    return s / static_cast<double>(m.size());
  };
  auto central = [&](const Mat& m, std::size_t c, int k) {
    const double mu = mean_col(m, c);
    double s = 0.0;
    for (const auto& row : m) s += std::pow(row[c] - mu, k);
    return s / static_cast<double>(m.size());
  };
  const double span = std::fabs(b - a);
  double sq = 0.0;
  for (std::size_t c = 0; c < d; ++c) sq += std::pow(mean_col(x, c) - mean_col(y, c), 2);
  double total = std::sqrt(sq) / span;
  for (int k = 2; k <= order; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += std::pow(central(x, c, k) - central(y, c, k), 2);
    total += std::sqrt(s) / std::pow(span, k);
  }
  return total;
}

/// Space pairs (E,H), (E,S), (H,S) with S=0, H=1, E=2.
inline constexpr std::array<std::array<std::size_t, 2>, 3> kPairs = {{{2, 1}, {2, 0}, {1, 0}}};

inline double similarity(const std::array<Mat, 3>& features, int order = 5) {
  std::array<Mat, 3> sq = features;
  for (auto& m : sq)
    for (auto& row : m)
      for (double& v : row) v = sigmoid(v);
  double total = 0.0;
  for (const auto& p : kPairs) total += cmd(sq[p[0]], sq[p[1]], order, 0.0, 1.0);
  return total / 3.0;
}

/// sum over (i, j) of (sum_b a[b][i] * c[b][j])^2
inline double gram_frobenius_sq(const Mat& a, const Mat& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < a[0].size(); ++i) {
    for (std::size_t j = 0; j < c[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < a.size(); ++b) s += a[b][i] * c[b][j];
      total += s * s;
    }
  }
  return total;
}

inline double difference(const std::array<Mat, 3>& shared, const std::array<Mat, 3>& specific) {
  double total = 0.0;
  for (std::size_t m = 0; m < 3; ++m) total += gram_frobenius_sq(specific[m], shared[m]);
  for (const auto& p : kPairs) total += gram_frobenius_sq(specific[p[0]], specific[p[1]]);
  return total;
}

struct Triple {
  Mat s, r, t;
};

inline double structure(const std::array<Triple, 3>& spaces) {
  const std::size_t batch = spaces[0].s.size();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::array<double, 3> cosines{};
    bool degenerate = false;
    for (std::size_t m = 0; m < 3; ++m) {
      Vec u(spaces[m].s[b].size()), v(u.size());
      for (std::size_t c = 0; c < u.size(); ++c) {
        u[c] = spaces[m].s[b][c] - spaces[m].r[b][c];
        v[c] = spaces[m].t[b][c] - spaces[m].r[b][c];
      }
      const double nu = std::sqrt(dot(u, u)), nv = std::sqrt(dot(v, v));
      if (nu < 1e-12 || nv < 1e-12) {
        degenerate = true;
        break;
      }
      cosines[m] = dot(u, v) / (nu * nv);
    }
    if (degenerate) continue;
    for (const auto& p : kPairs) total += std::fabs(cosines[p[0]] - cosines[p[1]]);
  }
  return total / (3.0 * static_cast<double>(batch));
}

// ---- model ------------------------------------------------------------------------

struct Checked {
  Vec s, r, t;
};

inline Checked distribute(const Vec& s, const Vec& r, const Vec& t) {
  const std::size_t d = s.size();
  Vec q(d, 0.0);
  auto gate = [](double x, double q0) { return (x - q0) * sigmoid(x - q0); };
  Vec q_checked(d);
  for (std::size_t c = 0; c < d; ++c) q_checked[c] = q[c] + gate(s[c], q[c]) + gate(r[c], q[c]) + gate(t[c], q[c]);
  Checked out{s, r, t};
  for (std::size_t c = 0; c < d; ++c) {
    out.s[c] += gate(s[c], q_checked[c]);
    out.r[c] += gate(r[c], q_checked[c]);
    out.t[c] += gate(t[c], q_checked[c]);
  }
  return out;
}

/// x * sig([a, b, c] W) for a [3D x D] weight.
inline Vec gated(const Vec& x, const std::array<Vec, 3>& joint, const Mat& w) {
  const std::size_t d = x.size();
  Vec out(d);
  for (std::size_t j = 0; j < d; ++j) {
    double z = 0.0;
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t i = 0; i < d; ++i) z += joint[m][i] * w[m * d + i][j];
    out[j] = x[j] * sigmoid(z);
  }
  return out;
}

/// Sorted-position combination of n vectors.
inline Vec pool(const std::vector<Vec>& features, const Vec& weights) {
  const std::size_t d = features[0].size();
  Vec out(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    Vec column;
    for (const auto& f : features) column.push_back(f[c]);
    std::sort(column.begin(), column.end(), std::greater<>());
    for (std::size_t i = 0; i < column.size(); ++i) out[c] += weights[i] * column[i];
  }
  return out;
}

inline Vec row_of(const ime::diff::Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline Vec gru_step(const Vec& x, const Vec& h, const ime::diff::GruParams& p) {
  const std::size_t dh = h.size();
  auto lin = [&](const ime::diff::Parameter& wi, const ime::diff::Parameter& bi,
                 const ime::diff::Parameter& wh, const ime::diff::Parameter& bh, std::size_t j,
                 double* hidden_part) {
    double xi = bi.value[j], hh = bh.value[j];
    for (std::size_t i = 0; i < x.size(); ++i) xi += x[i] * wi.value.at(i, j);
    for (std::size_t i = 0; i < dh; ++i) hh += h[i] * wh.value.at(i, j);
    if (hidden_part) *hidden_part = hh;
    return xi;
  };
  Vec out(dh);
  for (std::size_t j = 0; j < dh; ++j) {
    double hr = 0, hz = 0, hn = 0;
    const double r = sigmoid(lin(p.w_ir, p.b_ir, p.w_hr, p.b_hr, j, &hr) + hr);
    const double z = sigmoid(lin(p.w_iz, p.b_iz, p.w_hz, p.b_hz, j, &hz) + hz);
    const double xn = lin(p.w_in, p.b_in, p.w_hn, p.b_hn, j, &hn);
    const double n = std::tanh(xn + r * hn);
    out[j] = (1.0 - z) * n + z * h[j];
  }
  return out;
}

inline Vec positional_row(std::size_t i, std::size_t d_p) {
  Vec row(d_p);
  for (std::size_t k = 0; 2 * k < d_p; ++k) {
    const double angle = static_cast<double>(i) / std::pow(10000.0, 2.0 * k / static_cast<double>(d_p));
    row[2 * k] = std::sin(angle);
    row[2 * k + 1] = std::cos(angle);
  }
  return row;
}

inline Vec pooling_weights(const ime::model::ImeParams& p) {
  const std::size_t n = p.dims.n_pool, dh = p.dims.gru_hidden;
  std::vector<Vec> fwd(n), bwd(n);
  Vec h(dh, 0.0);
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = gru_step(positional_row(i, p.dims.pe_dim), h, p.gru_fwd);
  h.assign(dh, 0.0);
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = gru_step(positional_row(i, p.dims.pe_dim), h, p.gru_bwd);
  Vec logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = p.mlp_b.value[0];
    for (std::size_t j = 0; j < dh; ++j) z += fwd[i][j] * p.mlp_w.value[j] + bwd[i][j] * p.mlp_w.value[dh + j];
    logits[i] = z;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - mx));
  for (double& l : logits) l /= total;
  return logits;
}

struct ForwardOut {
  std::array<Checked, 3> checked;
  std::array<std::array<Vec, 3>, 3> shared;    // [kind][space]
  std::array<std::array<Vec, 3>, 3> specific;  // [kind][space]
  std::vector<Vec> features;
  Vec pooled;
};

inline Vec table_row(const ime::diff::Parameter& p, std::size_t r) {
  auto span = p.value.row_span(r);
  return {span.begin(), span.end()};
}

inline ForwardOut forward(const ime::model::ImeParams& p, std::size_t s, std::size_t r, std::size_t t,
                          const Vec& weights) {
  ForwardOut out;
  for (std::size_t m = 0; m < 3; ++m) {
    out.checked[m] = distribute(table_row(p.entity[m], s), table_row(p.relation[m], r),
                                table_row(p.timestamp[m], t));
  }
  const Mat w_shared = to_mat(p.w_shared.value);
  std::array<Mat, 3> w_spec;
  for (std::size_t m = 0; m < 3; ++m) w_spec[m] = to_mat(p.w_specific[m].value);
  for (std::size_t k = 0; k < 3; ++k) {
    std::array<Vec, 3> joint;
    for (std::size_t m = 0; m < 3; ++m) {
      joint[m] = k == 0 ? out.checked[m].s : (k == 1 ? out.checked[m].r : out.checked[m].t);
    }
    for (std::size_t m = 0; m < 3; ++m) out.shared[k][m] = gated(joint[m], joint, w_shared);
    for (std::size_t m = 0; m < 3; ++m) out.specific[k][m] = gated(joint[m], joint, w_spec[m]);
    for (std::size_t m = 0; m < 3; ++m) out.features.push_back(out.shared[k][m]);
    for (std::size_t m = 0; m < 3; ++m) out.features.push_back(out.specific[k][m]);
  }
  out.pooled = pool(out.features, weights);
  return out;
}

/// Scores of every candidate, computed independently of the graph.
inline Vec scores(const ime::model::ImeParams& p, std::size_t s, std::size_t r, std::size_t t,
                  const Vec& weights) {
  const Vec pooled = forward(p, s, r, t, weights).pooled;
  Vec out(p.dims.n_entities);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = dot(pooled, table_row(p.entity[2], e));
  return out;
}

// ---- ranking ---------------------------------------------------------------------

/// Counts candidates one by one; ties split evenly.
inline double filtered_rank(const Vec& scores, std::size_t target, const std::vector<std::size_t>& known) {
  double better = 0.0, ties = 0.0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e == target) continue;
    if (std::find(known.begin(), known.end(), e) != known.end()) continue;
    if (scores[e] > scores[target]) better += 1.0;
    else if (scores[e] == scores[target]) ties += 1.0;
  }
  return 1.0 + better + ties / 2.0;
}

}  // namespace oracle
