// ime: train, evaluate and inspect the multi-curvature TKG completion model.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ime/data.hpp"
#include "ime/eval.hpp"
#include "ime/gradient_suite.hpp"
#include "ime/tensor_io.hpp"
#include "ime/trainer.hpp"

namespace fs = std::filesystem;
using namespace ime;

namespace {

int cmd_train(const fs::path& config_path, const fs::path& out) {
  const auto config = train::TrainConfig::load(config_path);
  const auto summary = train::run_training(config, out);
  for (const auto& issue : summary.stats_issues) std::cerr << "warning: " << issue << '\n';
  std::cout << "epochs " << summary.state.epoch << ", best epoch " << summary.state.best_epoch << '\n';
  if (summary.valid.n_queries) std::cout << eval::report_table("valid", summary.valid);
  if (summary.test.n_queries) std::cout << eval::report_table("test", summary.test);
  std::cout << "wrote " << (out / "checkpoint.bin").string() << '\n';
  return 0;
}

std::span<const data::Quadruple> pick_split(const data::Dataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "valid") return d.valid;
  return d.test;
}

int cmd_eval(const fs::path& checkpoint, const std::string& split, bool per_relation,
             const fs::path& out) {
  auto ckpt = train::load_checkpoint(checkpoint);
  const auto dataset = data::index_dataset(train::load_raw_splits(ckpt.config));
  if (!(train::dims_for(ckpt.config, dataset) == ckpt.params.dims)) {
    throw CheckpointError("checkpoint does not match the dataset named in its config");
  }
  const auto queries = data::augment_reciprocal(pick_split(dataset, split), dataset.n_relations());
  if (queries.empty()) throw Error("split '" + split + "' is empty");
  const auto filter = dataset.filter_index();
  eval::EvalOptions options;
  options.pool = ckpt.config.pool;
  const auto report = eval::evaluate(ckpt.best_params, queries, filter, options);
  std::cout << eval::report_table(split, report);

  std::ostringstream csv;
  csv << eval::report_csv_header() << '\n' << eval::report_csv_row(split, report) << '\n';
  if (per_relation) {
    const auto by_rel = eval::evaluate_per_relation(ckpt.best_params, queries, filter, options);
    const std::size_t n_rel = dataset.n_relations();
    for (const auto& [r, rep] : by_rel) {
      std::string label = dataset.vocab.relations.label(r % n_rel);
      if (r >= n_rel) label += "^-1";
      std::cout << eval::report_table(split + "/" + label, rep);
      csv << eval::report_csv_row(split + "/" + label, rep) << '\n';
    }
  }
  if (!out.empty()) {
    fs::create_directories(out);
    diff::write_file_atomic(out / "report.csv", csv.str());
  }
  return 0;
}

int cmd_gradcheck(const fs::path& config_path, std::size_t dim) {
  const auto config = train::TrainConfig::load(config_path);
  train::SuiteOptions options;
  options.dim = dim;
  const auto suite = train::gradient_suite(config, options);
  std::cout << "batch " << suite.batch_size << " quadruples, D=" << dim << ", probe seed "
            << suite.probe_seed << ", min sort gap " << suite.sort_gap << '\n';
  for (const auto& t : suite.terms) {
    std::cout << std::left << std::setw(6) << t.term << " max rel error " << std::scientific
              << std::setprecision(3) << t.report.max_rel_error << std::defaultfloat
              << (t.report.passed ? "  ok" : "  FAIL") << '\n';
    if (!t.report.passed) {
      for (const auto& p : t.report.params) {
        if (p.max_rel_error > options.check.tol) {
          std::cout << "  " << p.name << ": " << p.max_rel_error << '\n';
        }
      }
    }
  }
  return suite.passed ? 0 : 1;
}

int cmd_synth(const std::string& pattern, std::size_t entities, std::size_t relations,
              std::size_t timestamps, std::uint64_t seed, const fs::path& out) {
  data::SyntheticSpec spec{entities, relations, timestamps, data::parse_pattern(pattern), seed};
  const auto splits = data::generate_synthetic(spec);
  data::write_splits(out, splits);
  std::cout << "train " << splits.train.size() << ", valid " << splits.valid.size() << ", test "
            << splits.test.size() << " -> " << out.string() << '\n';
  return 0;
}

int cmd_inspect(const fs::path& checkpoint) {
  const auto ckpt = train::load_checkpoint(checkpoint);
  const auto psi = model::pooling_weight_values(ckpt.best_params);
  std::cout << "pooling weights (sorted position: weight)\n" << std::setprecision(6);
  double total = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    std::cout << "  " << std::setw(2) << i + 1 << ": " << psi[i] << '\n';
    total += psi[i];
  }
  std::cout << "  sum: " << std::setprecision(17) << total << std::setprecision(6) << '\n';
  std::cout << "parameter norms\n";
  for (const auto* p : ckpt.best_params.parameters()) {
    double sq = 0.0;
    for (double v : p->value.values()) sq += v * v;
    std::cout << "  " << std::left << std::setw(24) << p->name << std::right << std::sqrt(sq) << '\n';
  }
  const auto c = model::check_constraints(ckpt.best_params);
  std::cout << "sphere max deviation " << c.sphere_max_deviation << ", ball max norm "
            << std::setprecision(17) << c.ball_max_norm << '\n';
  return std::fabs(total - 1.0) <= 1e-9 && c.satisfied() ? 0 : 1;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> values;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("invalid sweep value '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("--values is empty");
  return values;
}

int cmd_sweep(const fs::path& config_path, const std::string& param, const std::string& values,
              const fs::path& out) {
  const auto config = train::TrainConfig::load(config_path);
  const auto grid = parse_values(values);
  const auto results = train::run_sweep(config, param, grid, out);
  for (const auto& [v, summary] : results) {
    std::cout << param << "=" << v << "  test MRR " << summary.test.mrr << "  H@1 "
              << summary.test.hits1 << '\n';
  }
  std::cout << "wrote " << (out / "sweep.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IME temporal knowledge graph completion"};
  app.require_subcommand(1, 1);

  fs::path config, out, checkpoint;
  std::string split = "test", pattern = "ring", param, values;
  bool per_relation = false;
  std::size_t entities = 20, relations = 2, timestamps = 4, grad_dim = 8;
  std::uint64_t seed = 7;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, logs and report");
  train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();

  auto* evaluate = app.add_subcommand("eval", "filtered ranking metrics of a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
  evaluate->add_flag("--per-relation", per_relation, "also report each relation");
  evaluate->add_option("--out", out, "directory for report.csv");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
  gradcheck->add_option("--config", config)->required()->check(CLI::ExistingFile);
  gradcheck->add_option("--dim", grad_dim, "embedding dimension")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "write synthetic train/valid/test splits");
  synth->add_option("--pattern", pattern)->check(CLI::IsMember({"ring", "chain", "mixed"}));
  synth->add_option("--entities", entities)->check(CLI::PositiveNumber);
  synth->add_option("--relations", relations)->check(CLI::PositiveNumber);
  synth->add_option("--timestamps", timestamps)->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out)->required();

  auto* inspect = app.add_subcommand("inspect", "print pooling weights and parameter norms");
  inspect->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "train over a grid of one hyperparameter");
  sweep->add_option("--config", config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", param)->required()->check(CLI::IsMember({"alpha", "beta", "gamma", "dim"}));
  sweep->add_option("--values", values, "comma-separated list")->required();
  sweep->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, out);
    if (*evaluate) return cmd_eval(checkpoint, split, per_relation, out);
    if (*gradcheck) return cmd_gradcheck(config, grad_dim);
    if (*synth) return cmd_synth(pattern, entities, relations, timestamps, seed, out);
    if (*inspect) return cmd_inspect(checkpoint);
    if (*sweep) return cmd_sweep(config, param, values, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
