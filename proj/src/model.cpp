#include "ime/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ime/error.hpp"

namespace ime::model {

using diff::Shape;

PoolMode parse_pool_mode(std::string_view name) {
  if (name == "ap") return PoolMode::ap;
  if (name == "mp") return PoolMode::mp;
  if (name == "amp") return PoolMode::amp;
  throw ConfigError("unknown pooling mode '" + std::string(name) + "' (expected ap|mp|amp)");
}

std::string_view pool_mode_name(PoolMode mode) {
  switch (mode) {
    case PoolMode::ap: return "ap";
    case PoolMode::mp: return "mp";
    case PoolMode::amp: return "amp";
  }
  return "?";
}

ImeParams ImeParams::zeros(const ModelDims& dims) {
  if (dims.n_entities == 0 || dims.n_relations == 0 || dims.n_timestamps == 0 || dims.dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (dims.pe_dim % 2 != 0) throw ConfigError("positional encoding dimension must be even");
  const std::size_t d = dims.dim;
  ImeParams p;
  p.dims = dims;
  for (std::size_t m = 0; m < kSpaces; ++m) {
    const std::string space(kSpaceNames[m]);
    p.entity[m] = Parameter("entity." + space, Tensor({dims.n_entities, d}));
    p.relation[m] = Parameter("relation." + space, Tensor({dims.n_relations, d}));
    p.timestamp[m] = Parameter("timestamp." + space, Tensor({dims.n_timestamps, d}));
    p.w_specific[m] = Parameter("w_specific." + space, Tensor({3 * d, d}));
  }
  p.w_shared = Parameter("w_shared", Tensor({3 * d, d}));
  p.gru_fwd = diff::GruParams::zeros("gru_fwd", dims.pe_dim, dims.gru_hidden);
  p.gru_bwd = diff::GruParams::zeros("gru_bwd", dims.pe_dim, dims.gru_hidden);
  p.mlp_w = Parameter("mlp_w", Tensor({2 * dims.gru_hidden, 1}));
  p.mlp_b = Parameter("mlp_b", Tensor({1, 1}));
  p.positional = positional_encoding(dims.n_pool, dims.pe_dim);
  return p;
}

ImeParams ImeParams::initialize(const ModelDims& dims, std::uint64_t seed, double embedding_std) {
  if (!(embedding_std >= 0.0)) throw ConfigError("embedding_std must be non-negative");
  ImeParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, embedding_std);
  for (std::size_t m = 0; m < kSpaces; ++m) {
    for (Parameter* table : {&p.entity[m], &p.relation[m], &p.timestamp[m]}) {
      for (double& v : table->value.values()) v = normal(rng);
    }
  }
  auto uniform_fill = [&](Parameter& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.value.shape()[0]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : w.value.values()) v = u(rng);
  };
  uniform_fill(p.w_shared);
  for (auto& w : p.w_specific) uniform_fill(w);
  for (auto* gru : {&p.gru_fwd, &p.gru_bwd}) {
    for (Parameter* w : {&gru->w_ir, &gru->w_iz, &gru->w_in, &gru->w_hr, &gru->w_hz, &gru->w_hn}) {
      uniform_fill(*w);
    }
  }
  uniform_fill(p.mlp_w);
  project_embeddings(p);
  return p;
}

std::vector<Parameter*> ImeParams::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t m = 0; m < kSpaces; ++m) {
    out.push_back(&entity[m]);
    out.push_back(&relation[m]);
    out.push_back(&timestamp[m]);
  }
  out.push_back(&w_shared);
  for (auto& w : w_specific) out.push_back(&w);
  for (auto* w : gru_fwd.parameters()) out.push_back(w);
  for (auto* w : gru_bwd.parameters()) out.push_back(w);
  out.push_back(&mlp_w);
  out.push_back(&mlp_b);
  return out;
}

std::vector<const Parameter*> ImeParams::parameters() const {
  auto mut = const_cast<ImeParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void project_embeddings(ImeParams& params) {
  const auto s = static_cast<std::size_t>(Space::sphere);
  const auto h = static_cast<std::size_t>(Space::hyperbolic);
  for (Parameter* table : {&params.entity[s], &params.relation[s], &params.timestamp[s]}) {
    auto& v = table->value;
    for (std::size_t r = 0; r < v.rows(); ++r) {
      auto row = v.row_span(r);
      double sq = 0.0;
      for (double x : row) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm == 0.0) {
        std::fill(row.begin(), row.end(), 0.0);
        row[0] = 1.0;
        continue;
      }
      for (double& x : row) x /= norm;
    }
  }
  for (Parameter* table : {&params.entity[h], &params.relation[h], &params.timestamp[h]}) {
    auto& v = table->value;
    for (std::size_t r = 0; r < v.rows(); ++r) {
      auto row = v.row_span(r);
      double sq = 0.0;
      for (double x : row) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > kBallRadius) {
        const double scale = kBallRadius / norm;
        for (double& x : row) x *= scale;
        // Rounding can leave the row a few ulps outside the radius.
        for (;;) {
          double sq2 = 0.0;
          for (double x : row) sq2 += x * x;
          if (std::sqrt(sq2) <= kBallRadius) break;
          for (double& x : row) x = std::nextafter(x, 0.0);
        }
      }
    }
  }
}

ConstraintReport check_constraints(const ImeParams& params) {
  ConstraintReport report;
  auto row_norm = [](std::span<const double> row) {
    double sq = 0.0;
    for (double x : row) sq += x * x;
    return std::sqrt(sq);
  };
  const auto s = static_cast<std::size_t>(Space::sphere);
  const auto h = static_cast<std::size_t>(Space::hyperbolic);
  for (const Parameter* table : {&params.entity[s], &params.relation[s], &params.timestamp[s]}) {
    for (std::size_t r = 0; r < table->value.rows(); ++r) {
      report.sphere_max_deviation =
          std::max(report.sphere_max_deviation, std::fabs(row_norm(table->value.row_span(r)) - 1.0));
    }
  }
  for (const Parameter* table : {&params.entity[h], &params.relation[h], &params.timestamp[h]}) {
    for (std::size_t r = 0; r < table->value.rows(); ++r) {
      report.ball_max_norm = std::max(report.ball_max_norm, row_norm(table->value.row_span(r)));
    }
  }
  return report;
}

namespace {

// (x - q) * sig(x - q)
Var gated_residual(Var x, Var q) {
  Var delta = sub(x, q);
  return mul(delta, sigmoid(delta));
}

}  // namespace

CheckedTriple distribute(Var s, Var r, Var t) {
  Graph& g = *s.graph;
  Var q = g.constant(Tensor(s.shape()));
  Var q_checked = add(add(add(q, gated_residual(s, q)), gated_residual(r, q)), gated_residual(t, q));
  return {add(s, gated_residual(s, q_checked)), add(r, gated_residual(r, q_checked)),
          add(t, gated_residual(t, q_checked))};
}

SpaceVars encode_shared(const SpaceVars& checked, Var w_shared, Var* gate) {
  Var joint = concat(checked);
  Var g = sigmoid(matmul(joint, w_shared));
  if (gate) *gate = g;
  return {mul(checked[0], g), mul(checked[1], g), mul(checked[2], g)};
}

SpaceVars encode_specific(const SpaceVars& checked, const SpaceVars& w_specific) {
  Var joint = concat(checked);
  SpaceVars out;
  for (std::size_t m = 0; m < kSpaces; ++m) {
    out[m] = mul(checked[m], sigmoid(matmul(joint, w_specific[m])));
  }
  return out;
}

Tensor positional_encoding(std::size_t n, std::size_t d_p) {
  if (d_p % 2 != 0) throw ConfigError("positional encoding dimension must be even");
  Tensor p({n, d_p});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; 2 * k < d_p; ++k) {
      const double angle = static_cast<double>(i) /
                           std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d_p));
      p.at(i, 2 * k) = std::sin(angle);
      p.at(i, 2 * k + 1) = std::cos(angle);
    }
  }
  return p;
}

Var pooling_weights(Graph& g, ImeParams& params) {
  const std::size_t n = params.positional.rows();
  const std::size_t h = params.dims.gru_hidden;
  std::vector<Var> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(g.constant(Tensor::row(params.positional.row_span(i))));
  }
  std::vector<Var> fwd(n), bwd(n);
  Var state = g.constant(Tensor({1, h}));
  for (std::size_t i = 0; i < n; ++i) fwd[i] = state = diff::gru_cell(g, rows[i], state, params.gru_fwd);
  state = g.constant(Tensor({1, h}));
  for (std::size_t i = n; i-- > 0;) bwd[i] = state = diff::gru_cell(g, rows[i], state, params.gru_bwd);
  Var w = g.parameter(params.mlp_w);
  Var b = g.parameter(params.mlp_b);
  std::vector<Var> logits;
  logits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<Var, 2> both{fwd[i], bwd[i]};
    logits.push_back(add(matmul(concat(both), w), b));
  }
  return diff::softmax(concat(logits));
}

Var pool(std::span<const Var> features, PoolMode mode, const Var* psi) {
  if (features.empty()) throw ShapeError("pool: no input features");
  Graph& g = *features[0].graph;
  const std::size_t n = features.size();
  Var sorted = diff::sort_desc_per_dimension(diff::stack(features));
  Var weights;
  switch (mode) {
    case PoolMode::ap:
      weights = g.constant(Tensor({1, n}, 1.0 / static_cast<double>(n)));
      break;
    case PoolMode::mp: {
      Tensor one_hot({1, n});
      one_hot[0] = 1.0;
      weights = g.constant(std::move(one_hot));
      break;
    }
    case PoolMode::amp:
      if (psi == nullptr) throw Error("pool: AMP requires pooling weights");
      weights = *psi;
      break;
  }
  return diff::weighted_sum_positions(sorted, weights);
}

Forward forward(Graph& g, ImeParams& params, std::span<const data::Quadruple> batch, PoolMode mode) {
  const auto& dims = params.dims;
  std::vector<std::size_t> s_idx, r_idx, t_idx;
  s_idx.reserve(batch.size());
  r_idx.reserve(batch.size());
  t_idx.reserve(batch.size());
  for (const auto& q : batch) {
    if (q.s >= dims.n_entities || q.r >= dims.n_relations || q.t >= dims.n_timestamps) {
      throw IndexError("quadruple (" + std::to_string(q.s) + ", " + std::to_string(q.r) + ", " +
                       std::to_string(q.o) + ", " + std::to_string(q.t) + ") out of range");
    }
    s_idx.push_back(q.s);
    r_idx.push_back(q.r);
    t_idx.push_back(q.t);
  }
  Forward out;
  for (std::size_t m = 0; m < kSpaces; ++m) {
    out.checked[m] = distribute(diff::gather_rows(g.parameter(params.entity[m]), s_idx),
                                diff::gather_rows(g.parameter(params.relation[m]), r_idx),
                                diff::gather_rows(g.parameter(params.timestamp[m]), t_idx));
  }
  Var w_shared = g.parameter(params.w_shared);
  SpaceVars w_specific;
  for (std::size_t m = 0; m < kSpaces; ++m) w_specific[m] = g.parameter(params.w_specific[m]);
  for (std::size_t k = 0; k < kKinds; ++k) {
    SpaceVars h;
    for (std::size_t m = 0; m < kSpaces; ++m) {
      const auto& c = out.checked[m];
      h[m] = k == 0 ? c.s : (k == 1 ? c.r : c.t);
    }
    out.shared[k] = encode_shared(h, w_shared, &out.shared_gate[k]);
    out.specific[k] = encode_specific(h, w_specific);
    out.features.insert(out.features.end(), out.shared[k].begin(), out.shared[k].end());
    out.features.insert(out.features.end(), out.specific[k].begin(), out.specific[k].end());
  }
  if (out.features.size() != dims.n_pool) {
    throw ConfigError("feature set has " + std::to_string(out.features.size()) +
                      " vectors but the model was built for " + std::to_string(dims.n_pool));
  }
  if (mode == PoolMode::amp) out.psi = pooling_weights(g, params);
  out.pooled = pool(out.features, mode, mode == PoolMode::amp ? &out.psi : nullptr);
  return out;
}

Var score_all(Graph& g, ImeParams& params, Var pooled) {
  const auto e = static_cast<std::size_t>(Space::euclidean);
  return matmul(pooled, diff::transpose(g.parameter(params.entity[e])));
}

double min_sort_gap(const Forward& fwd) {
  const std::size_t n = fwd.features.size();
  const Tensor& first = fwd.features[0].value();
  const std::size_t b = first.rows(), d = first.cols();
  double gap = std::numeric_limits<double>::infinity();
  std::vector<double> column(n);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t i = 0; i < n; ++i) column[i] = fwd.features[i].value().at(r, c);
      std::sort(column.begin(), column.end());
      for (std::size_t i = 1; i < n; ++i) gap = std::min(gap, column[i] - column[i - 1]);
    }
  }
  return gap;
}

Tensor score_batch(const ImeParams& params, std::span<const data::Quadruple> queries, PoolMode mode) {
  ImeParams local = params;
  Graph g;
  Forward fwd = forward(g, local, queries, mode);
  return score_all(g, local, fwd.pooled).value();
}

std::vector<double> score_all(const ImeParams& params, std::size_t s, std::size_t r, std::size_t t,
                              PoolMode mode) {
  const data::Quadruple q{s, r, 0, t};
  Tensor scores = score_batch(params, std::span(&q, 1), mode);
  return {scores.values().begin(), scores.values().end()};
}

double score(const ImeParams& params, std::size_t s, std::size_t r, std::size_t t, std::size_t o,
             PoolMode mode) {
  if (o >= params.dims.n_entities) {
    throw IndexError("candidate entity " + std::to_string(o) + " out of range");
  }
  ImeParams local = params;
  Graph g;
  const data::Quadruple q{s, r, o, t};
  Forward fwd = forward(g, local, std::span(&q, 1), mode);
  const auto e = static_cast<std::size_t>(Space::euclidean);
  Var answer = diff::gather_rows(g.parameter(local.entity[e]), std::span(&o, 1));
  return diff::row_dot(fwd.pooled, answer).value().item();
}

std::vector<double> pooling_weight_values(const ImeParams& params) {
  ImeParams local = params;
  Graph g;
  const Tensor& psi = pooling_weights(g, local).value();
  return {psi.values().begin(), psi.values().end()};
}

}  // namespace ime::model
