#include "ime/gradient_suite.hpp"

#include <vector>

namespace ime::train {

SuiteReport gradient_suite(const TrainConfig& config, const SuiteOptions& options) {
  TrainConfig cfg = config;
  cfg.dim = options.dim;
  cfg.synthetic = data::SyntheticSpec{options.n_entities, options.n_relations, options.n_timestamps,
                                      data::Pattern::ring, 7};
  cfg.train_path.clear();
  cfg.valid_path.clear();
  cfg.test_path.clear();
  cfg.validate();

  const auto dataset = data::index_dataset(data::generate_synthetic(*cfg.synthetic));
  std::vector<data::Quadruple> all = dataset.train;
  all.insert(all.end(), dataset.valid.begin(), dataset.valid.end());
  all.insert(all.end(), dataset.test.begin(), dataset.test.end());
  auto batch = data::augment_reciprocal(all, dataset.n_relations());
  if (options.batch_size == 0) throw ConfigError("gradient suite batch must be non-empty");
  if (batch.size() > options.batch_size) batch.resize(options.batch_size);
  const auto dims = dims_for(cfg, dataset);
  const auto loss_opts = cfg.loss_options();

  SuiteReport out;
  out.batch_size = batch.size();
  out.sort_gap = -1.0;
  for (std::uint64_t seed = 0; seed < std::max<std::size_t>(options.candidate_seeds, 1); ++seed) {
    auto candidate = model::ImeParams::initialize(dims, cfg.seed + seed, options.embedding_std);
    diff::Graph g;
    const double gap = model::min_sort_gap(model::forward(g, candidate, batch, cfg.pool));
    if (gap > out.sort_gap) {
      out.sort_gap = gap;
      out.probe_seed = cfg.seed + seed;
    }
  }
  auto params = model::ImeParams::initialize(dims, out.probe_seed, options.embedding_std);
  const auto list = params.parameters();

  out.passed = true;
  for (std::size_t k = 0; k < kLossTermNames.size(); ++k) {
    auto build = [&, k](diff::Graph& g) {
      auto terms = loss::total_loss(g, params, batch, loss_opts);
      const std::array<diff::Var, 5> vars = {terms.task, terms.sim, terms.diff, terms.stru, terms.total};
      return vars[k];
    };
    out.terms[k] = {kLossTermNames[k], diff::grad_check(build, list, options.check)};
    out.passed = out.passed && out.terms[k].report.passed;
  }
  return out;
}

}  // namespace ime::train
