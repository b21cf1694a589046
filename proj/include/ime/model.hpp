#pragma once

// Forward pass of the multi-curvature model:
//   per-space embedding lookup -> quadruplet distributor -> shared/specific
//   gated encoders -> 18-vector feature set -> sorted pooling -> inner
//   product with candidate entities.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ime/data.hpp"
#include "ime/graph.hpp"
#include "ime/gru.hpp"

namespace ime::model {

using diff::Graph;
using diff::Parameter;
using diff::Tensor;
using diff::Var;

/// Curvature spaces in canonical order.
enum class Space : std::size_t { sphere = 0, hyperbolic = 1, euclidean = 2 };
inline constexpr std::size_t kSpaces = 3;
inline constexpr std::array<std::string_view, kSpaces> kSpaceNames = {"sphere", "hyperbolic",
                                                                      "euclidean"};

/// Element kinds of a quadruple that get encoded: head entity, relation, timestamp.
inline constexpr std::size_t kKinds = 3;

enum class PoolMode { ap, mp, amp };
PoolMode parse_pool_mode(std::string_view name);
std::string_view pool_mode_name(PoolMode mode);

/// Hyperbolic rows are kept at norm <= kBallRadius.
inline constexpr double kBallRadius = 1.0 - 1e-5;

struct ModelDims {
  std::size_t n_entities = 0;
  /// Relation table rows, 2|R| after reciprocal augmentation.
  std::size_t n_relations = 0;
  std::size_t n_timestamps = 0;
  std::size_t dim = 32;
  std::size_t pe_dim = 32;
  std::size_t gru_hidden = 16;
  std::size_t n_pool = 2 * kSpaces * kKinds;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ImeParams {
  ModelDims dims;
  std::array<Parameter, kSpaces> entity;
  std::array<Parameter, kSpaces> relation;
  std::array<Parameter, kSpaces> timestamp;
  /// Shared encoder weight, [3D x D].
  Parameter w_shared;
  /// Per-space encoder weights, [3D x D] each.
  std::array<Parameter, kSpaces> w_specific;
  diff::GruParams gru_fwd;
  diff::GruParams gru_bwd;
  /// Projection of the concatenated GRU states to one logit, [2h x 1] and [1 x 1].
  Parameter mlp_w;
  Parameter mlp_b;
  /// Positional encoding rows fed to the GRUs, never trained.
  Tensor positional;

  static ImeParams zeros(const ModelDims& dims);
  /// Embeddings ~ N(0, embedding_std^2) then projected; weights ~ U(+-1/sqrt(fan_in)); biases zero.
  static ImeParams initialize(const ModelDims& dims, std::uint64_t seed, double embedding_std = 1e-2);

  /// Every trainable parameter in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Unit-normalizes hyperspherical rows and clips hyperbolic rows into the ball.
void project_embeddings(ImeParams& params);

struct ConstraintReport {
  /// max | ||row|| - 1 | over hyperspherical rows.
  double sphere_max_deviation = 0.0;
  /// max ||row|| over hyperbolic rows.
  double ball_max_norm = 0.0;
  bool satisfied(double sphere_tol = 1e-9) const {
    return sphere_max_deviation <= sphere_tol && ball_max_norm <= kBallRadius;
  }
};
ConstraintReport check_constraints(const ImeParams& params);

/// Distributor output for one space, rows aligned with the batch.
struct CheckedTriple {
  Var s;
  Var r;
  Var t;
};

/// Gated aggregation into a zero distributor and redistribution back.
CheckedTriple distribute(Var s, Var r, Var t);

/// One element kind across the three spaces, index = Space.
using SpaceVars = std::array<Var, kSpaces>;

/// h_M = checked_M * sig([checked_S, checked_H, checked_E] W). The single gate
/// is returned through `gate` when requested.
SpaceVars encode_shared(const SpaceVars& checked, Var w_shared, Var* gate = nullptr);
/// As encode_shared but space M is gated by its own weight.
SpaceVars encode_specific(const SpaceVars& checked, const SpaceVars& w_specific);

/// Row i: sin/cos of i / 10000^(2k/d_p), interleaved; i = 0..n-1.
Tensor positional_encoding(std::size_t n, std::size_t d_p);

/// Softmax over MLP(BiGRU(P)) as a [1 x n] row.
Var pooling_weights(Graph& g, ImeParams& params);

/// Sorts each dimension across the n inputs ([B x D] each) and combines the
/// sorted positions: uniform weights for AP, the first position for MP, `psi`
/// for AMP.
Var pool(std::span<const Var> features, PoolMode mode, const Var* psi = nullptr);

struct Forward {
  std::array<CheckedTriple, kSpaces> checked;
  /// [kind][space]
  std::array<SpaceVars, kKinds> shared;
  std::array<SpaceVars, kKinds> specific;
  std::array<Var, kKinds> shared_gate;
  /// The 18 pooled inputs in canonical order.
  std::vector<Var> features;
  Var psi;
  Var pooled;
};

/// Full forward pass for a batch of (augmented) quadruples; `o` is ignored.
Forward forward(Graph& g, ImeParams& params, std::span<const data::Quadruple> batch,
                PoolMode mode = PoolMode::amp);

/// Scores of every entity for each pooled row, [B x |E|].
Var score_all(Graph& g, ImeParams& params, Var pooled);

/// Smallest gap between adjacent sorted values in any pooled column.
double min_sort_gap(const Forward& fwd);

// Inference helpers on read-only parameters.
double score(const ImeParams& params, std::size_t s, std::size_t r, std::size_t t, std::size_t o,
             PoolMode mode = PoolMode::amp);
std::vector<double> score_all(const ImeParams& params, std::size_t s, std::size_t r, std::size_t t,
                              PoolMode mode = PoolMode::amp);
/// [B x |E|] scores for each query's (s, r, t).
Tensor score_batch(const ImeParams& params, std::span<const data::Quadruple> queries,
                   PoolMode mode = PoolMode::amp);
/// The normalized pooling weights as plain values.
std::vector<double> pooling_weight_values(const ImeParams& params);

}  // namespace ime::model
