#include "ime/losses.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ime/error.hpp"

namespace ime::loss {

using diff::Tensor;
using model::kSpaces;
using model::Space;

namespace {

constexpr auto S = static_cast<std::size_t>(Space::sphere);
constexpr auto H = static_cast<std::size_t>(Space::hyperbolic);
constexpr auto E = static_cast<std::size_t>(Space::euclidean);
constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kSpacePairs = {
    {{E, H}, {E, S}, {H, S}}};

constexpr double kDegenerateNorm = 1e-12;

}  // namespace

LossWeights LossWeights::for_dataset(std::string_view dataset) {
  if (dataset == "ICEWS14") return {0.4, 0.4, 0.1};
  if (dataset == "ICEWS05-15") return {0.9, 0.3, 0.1};
  if (dataset == "GDELT") return {1.0, 0.3, 0.1};
  throw ConfigError("no tuned loss weights for dataset '" + std::string(dataset) + "'");
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

SimFeatures parse_sim_features(std::string_view name) {
  if (name == "shared") return SimFeatures::shared;
  if (name == "specific") return SimFeatures::specific;
  throw ConfigError("unknown sim_features '" + std::string(name) + "' (expected shared|specific)");
}

std::string_view sim_features_name(SimFeatures f) {
  return f == SimFeatures::shared ? "shared" : "specific";
}

Var task_loss(Var scores, std::span<const std::size_t> targets) {
  return diff::affine(diff::mean(diff::pick(diff::log_softmax(scores), targets)), -1.0);
}

Var cmd(Var x, Var y, int order, double a, double b) {
  const diff::Shape xs = x.shape();
  const diff::Shape ys = y.shape();
  if (xs.size() != 2 || ys.size() != 2 || xs[1] != ys[1]) {
    throw ShapeError("cmd: incompatible shapes " + diff::shape_string(xs) + " and " +
                     diff::shape_string(ys));
  }
  if (xs[0] == 0 || ys[0] == 0) throw ShapeError("cmd: empty batch");
  if (order < 1) throw ConfigError("cmd: moment order must be >= 1");
  if (!(b > a)) throw ConfigError("cmd: interval needs b > a");
  const double span = std::fabs(b - a);
  Var mx = diff::mean_rows(x);
  Var my = diff::mean_rows(y);
  Var total = diff::affine(diff::l2_norm(diff::sub(mx, my)), 1.0 / span);
  Var cx = diff::sub(x, diff::broadcast_rows(mx, xs[0]));
  Var cy = diff::sub(y, diff::broadcast_rows(my, ys[0]));
  for (int k = 2; k <= order; ++k) {
    Var mom_x = diff::mean_rows(diff::powi(cx, k));
    Var mom_y = diff::mean_rows(diff::powi(cy, k));
    total = diff::add(total, diff::affine(diff::l2_norm(diff::sub(mom_x, mom_y)),
                                          1.0 / std::pow(span, k)));
  }
  return total;
}

Var similarity_loss(const SpaceVars& features, int order, double a, double b) {
  SpaceVars squashed;
  for (std::size_t m = 0; m < kSpaces; ++m) squashed[m] = diff::sigmoid(features[m]);
  Var total;
  for (std::size_t p = 0; p < kSpacePairs.size(); ++p) {
    const auto [m1, m2] = kSpacePairs[p];
    Var term = cmd(squashed[m1], squashed[m2], order, a, b);
    total = p == 0 ? term : diff::add(total, term);
  }
  return diff::affine(total, 1.0 / 3.0);
}

Var difference_loss(const SpaceVars& shared, const SpaceVars& specific) {
  auto gram = [](Var lhs, Var rhs) {
    if (lhs.shape() != rhs.shape()) {
      throw ShapeError("difference_loss: shape mismatch " + diff::shape_string(lhs.shape()) +
                       " vs " + diff::shape_string(rhs.shape()));
    }
    return diff::frobenius_sq(diff::matmul(diff::transpose(lhs), rhs));
  };
  Var total = gram(specific[0], shared[0]);
  for (std::size_t m = 1; m < kSpaces; ++m) total = diff::add(total, gram(specific[m], shared[m]));
  for (const auto& [m1, m2] : kSpacePairs) total = diff::add(total, gram(specific[m1], specific[m2]));
  return total;
}

Var structure_loss(const std::array<model::CheckedTriple, kSpaces>& checked) {
  Graph& g = *checked[0].s.graph;
  const std::size_t batch = checked[0].s.value().rows();
  const std::size_t dim = checked[0].s.value().cols();
  if (batch == 0) throw ShapeError("structure_loss: empty batch");

  std::array<Var, kSpaces> ab, cb;
  std::vector<double> valid(batch, 1.0);
  for (std::size_t m = 0; m < kSpaces; ++m) {
    ab[m] = diff::sub(checked[m].s, checked[m].r);
    cb[m] = diff::sub(checked[m].t, checked[m].r);
    std::size_t degenerate = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      auto norm = [&](const Tensor& v) {
        double sq = 0.0;
        for (double x : v.row_span(b)) sq += x * x;
        return std::sqrt(sq);
      };
      if (norm(ab[m].value()) < kDegenerateNorm || norm(cb[m].value()) < kDegenerateNorm) {
        valid[b] = 0.0;
        ++degenerate;
      }
    }
    if (degenerate == batch) {
      throw NumericError("structure_loss: every triple is degenerate in the " +
                         std::string(model::kSpaceNames[m]) + " space");
    }
  }

  // Degenerate rows are swapped for a fixed unit vector before normalizing;
  // their contribution is masked out afterwards.
  Tensor keep({batch, dim}), fill({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    if (valid[b] != 0.0) {
      for (std::size_t c = 0; c < dim; ++c) keep.at(b, c) = 1.0;
    } else {
      fill.at(b, 0) = 1.0;
    }
  }
  Var keep_v = g.constant(std::move(keep));
  Var fill_v = g.constant(std::move(fill));
  auto safe_unit = [&](Var v) { return diff::l2_normalize(diff::add(diff::mul(v, keep_v), fill_v)); };

  std::array<Var, kSpaces> cosines;
  for (std::size_t m = 0; m < kSpaces; ++m) {
    cosines[m] = diff::row_dot(safe_unit(ab[m]), safe_unit(cb[m]));
  }
  Var mask = g.constant(Tensor({batch, 1}, valid));
  Var total;
  for (std::size_t p = 0; p < kSpacePairs.size(); ++p) {
    const auto [m1, m2] = kSpacePairs[p];
    Var term = diff::sum(diff::mul(diff::abs(diff::sub(cosines[m1], cosines[m2])), mask));
    total = p == 0 ? term : diff::add(total, term);
  }
  return diff::affine(total, 1.0 / (3.0 * static_cast<double>(batch)));
}

LossBreakdown LossTerms::breakdown() const {
  return {task.value().item(), sim.value().item(), diff.value().item(), stru.value().item(),
          total.value().item()};
}

LossTerms total_loss(Graph& g, model::ImeParams& params, std::span<const data::Quadruple> batch,
                     const LossOptions& options) {
  options.weights.validate();
  if (batch.empty()) throw ShapeError("total_loss: empty batch");
  model::Forward fwd = model::forward(g, params, batch, options.pool);
  std::vector<std::size_t> targets;
  targets.reserve(batch.size());
  for (const auto& q : batch) {
    if (q.o >= params.dims.n_entities) {
      throw IndexError("target entity " + std::to_string(q.o) + " out of range");
    }
    targets.push_back(q.o);
  }
  LossTerms terms;
  terms.task = task_loss(model::score_all(g, params, fwd.pooled), targets);
  const auto& sim_source = options.sim_features == SimFeatures::shared ? fwd.shared : fwd.specific;
  for (std::size_t k = 0; k < model::kKinds; ++k) {
    Var sim = similarity_loss(sim_source[k], options.cmd_order, options.cmd_a, options.cmd_b);
    Var dif = difference_loss(fwd.shared[k], fwd.specific[k]);
    terms.sim = k == 0 ? sim : diff::add(terms.sim, sim);
    terms.diff = k == 0 ? dif : diff::add(terms.diff, dif);
  }
  terms.stru = structure_loss(fwd.checked);
  const auto& w = options.weights;
  terms.total = diff::add(diff::add(diff::add(terms.task, diff::affine(terms.sim, w.alpha)),
                                    diff::affine(terms.diff, w.beta)),
                          diff::affine(terms.stru, w.gamma));
  return terms;
}

}  // namespace ime::loss
