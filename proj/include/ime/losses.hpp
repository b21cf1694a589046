#pragma once

#include <array>
#include <span>
#include <string_view>

#include "ime/data.hpp"
#include "ime/model.hpp"

namespace ime::loss {

using diff::Graph;
using diff::Var;
using model::SpaceVars;

/// Weights of the similarity, difference and structure terms.
struct LossWeights {
  double alpha = 0.4;
  double beta = 0.4;
  double gamma = 0.1;

  /// Tuned values for ICEWS14, ICEWS05-15 and GDELT.
  static LossWeights for_dataset(std::string_view dataset);
  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double task = 0.0;
  double sim = 0.0;
  double diff = 0.0;
  double stru = 0.0;
  double total = 0.0;
};

/// Which encoder output the similarity term compares across spaces.
enum class SimFeatures { shared, specific };
SimFeatures parse_sim_features(std::string_view name);
std::string_view sim_features_name(SimFeatures f);

struct LossOptions {
  LossWeights weights;
  int cmd_order = 5;
  double cmd_a = 0.0;
  double cmd_b = 1.0;
  SimFeatures sim_features = SimFeatures::shared;
  model::PoolMode pool = model::PoolMode::amp;
};

/// Mean over rows of -log softmax(scores)[target].
Var task_loss(Var scores, std::span<const std::size_t> targets);

/// Central moment discrepancy between the rows of x and y (same column count),
/// truncated at moment `order`, for values assumed to lie in [a, b].
Var cmd(Var x, Var y, int order = 5, double a = 0.0, double b = 1.0);

/// Mean CMD over the space pairs (E,H), (E,S), (H,S) after a sigmoid squash.
Var similarity_loss(const SpaceVars& features, int order = 5, double a = 0.0, double b = 1.0);

/// sum_M ||spec_M^T shared_M||_F^2 + sum_pairs ||spec_M1^T spec_M2||_F^2.
Var difference_loss(const SpaceVars& shared, const SpaceVars& specific);

/// Mean over space pairs and batch of |cos_M1 - cos_M2|, where cos_M is the
/// angle at the relation vertex of the space's checked triple. Items with a
/// coincident vertex pair in any space contribute 0.
Var structure_loss(const std::array<model::CheckedTriple, model::kSpaces>& checked);

struct LossTerms {
  Var task;
  Var sim;
  Var diff;
  Var stru;
  Var total;

  LossBreakdown breakdown() const;
};

/// Combines the four terms on one forward pass over an augmented batch.
LossTerms total_loss(Graph& g, model::ImeParams& params, std::span<const data::Quadruple> batch,
                     const LossOptions& options = {});

}  // namespace ime::loss
