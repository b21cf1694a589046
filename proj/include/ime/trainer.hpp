#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ime/data.hpp"
#include "ime/error.hpp"
#include "ime/eval.hpp"
#include "ime/losses.hpp"
#include "ime/model.hpp"

namespace ime::train {

enum class OptimizerKind { adagrad, sgd };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

/// Flat key=value configuration. Every field has a key of the same name;
/// `preset` and `data_dir` are convenience keys (see set()).
struct TrainConfig {
  std::string dataset;  // published-statistics name, or empty
  std::size_t dim = 500;
  double lr = 0.1;
  std::size_t batch_size = 1000;
  std::size_t max_epochs = 200;
  std::size_t eval_interval = 1;
  std::size_t patience = 50;
  loss::LossWeights weights;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adagrad;
  std::size_t pe_dim = 32;
  std::size_t gru_hidden = 16;
  int cmd_order = 5;
  loss::SimFeatures sim_features = loss::SimFeatures::shared;
  model::PoolMode pool = model::PoolMode::amp;
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  /// Used when no dataset paths are given.
  std::optional<data::SyntheticSpec> synthetic;

  /// Published settings: D=500, lr=0.1, batch 1000, d_p=32 and the dataset's loss weights.
  static TrainConfig paper_defaults(std::string_view dataset = "ICEWS14");
  /// D=32, batch 128, synthetic 20-entity ring with 2 relations and 4 timestamps.
  static TrainConfig desk_profile();

  /// Applies one key. `preset` resets every field to a profile
  /// (icews14|icews05-15|gdelt|desk); `data_dir` sets the three split paths.
  /// Relative paths are resolved against `base_dir`.
  void set(std::string_view key, std::string_view value,
           const std::filesystem::path& base_dir = {});

  /// `preset` lines are applied first regardless of position; unknown keys,
  /// duplicate keys and malformed lines are ConfigErrors.
  static TrainConfig parse(std::istream& in, const std::filesystem::path& base_dir = {});
  static TrainConfig load(const std::filesystem::path& path);
  /// Round-trips through parse().
  std::string to_text() const;

  loss::LossOptions loss_options() const;
  void validate() const;
};

/// Reads the configured dataset (or generates the synthetic one).
data::RawSplits load_raw_splits(const TrainConfig& config);

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  double best_valid_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t evals_since_best = 0;
  /// Adagrad accumulators, aligned with ImeParams::parameters().
  std::vector<diff::Tensor> accumulators;
};

/// acc += g^2; value -= lr * g / (sqrt(acc) + 1e-10), coordinate-wise.
void adagrad_update(std::span<diff::Parameter* const> params, double lr,
                    std::vector<diff::Tensor>& accumulators);
void sgd_update(std::span<diff::Parameter* const> params, double lr);

/// Gradient update followed by the per-space projection.
void optimizer_step(model::ImeParams& params, double lr, OptimizerKind kind,
                    std::vector<diff::Tensor>& accumulators);

struct Checkpoint {
  TrainConfig config;
  model::ImeParams params;
  /// Parameters with the best validation MRR seen so far.
  model::ImeParams best_params;
  TrainState state;
};

inline constexpr int kCheckpointVersion = 1;

/// Text manifest: version, model dims, loss weights, training counters and config.
std::string manifest_text(const Checkpoint& ckpt);
/// Manifest followed by tensor records; written atomically.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError on version mismatch, truncation, or tensors that do
/// not match the manifest dims (or `expected`, when given).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<model::ModelDims>& expected = std::nullopt);

/// Raised when the loss turns non-finite.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  /// Mean of the step breakdowns in the epoch.
  loss::LossBreakdown loss;
  std::optional<eval::RankingReport> valid;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochLog& log);
/// epoch,step,task,sim,diff,stru,total
std::string loss_csv_row(std::size_t epoch, std::size_t step, const loss::LossBreakdown& b);

class Trainer {
 public:
  Trainer(TrainConfig config, data::Dataset dataset);
  /// Resumes from a checkpoint; `dataset` must match its dims.
  Trainer(Checkpoint checkpoint, data::Dataset dataset);

  const TrainConfig& config() const { return config_; }
  const data::Dataset& dataset() const { return dataset_; }
  model::ImeParams& params() { return params_; }
  const model::ImeParams& params() const { return params_; }
  const model::ImeParams& best_params() const { return best_params_; }
  const TrainState& state() const { return state_; }
  const std::vector<loss::LossBreakdown>& step_losses() const { return step_losses_; }
  /// Worst constraint values observed after any optimizer step so far.
  const model::ConstraintReport& worst_constraints() const { return worst_constraints_; }

  /// One optimizer step on an augmented batch.
  loss::LossBreakdown step(std::span<const data::Quadruple> batch);
  /// Shuffles the augmented training split with a generator keyed by
  /// (seed, epoch) and steps through it.
  EpochLog run_epoch();
  /// Epochs until max_epochs or early stopping; `on_epoch` sees every log row.
  void train(const std::function<void(const EpochLog&)>& on_epoch = {});

  eval::RankingReport evaluate_split(std::span<const data::Quadruple> split, bool use_best) const;

  Checkpoint checkpoint() const;
  /// Where a diagnostic checkpoint is written if training diverges.
  void set_diagnostic_path(std::filesystem::path path) { diagnostic_path_ = std::move(path); }

 private:
  TrainConfig config_;
  data::Dataset dataset_;
  data::FilterIndex filter_;
  std::vector<data::Quadruple> train_aug_;
  std::vector<data::Quadruple> valid_aug_;
  model::ImeParams params_;
  model::ImeParams best_params_;
  TrainState state_;
  std::vector<loss::LossBreakdown> step_losses_;
  model::ConstraintReport worst_constraints_;
  std::filesystem::path diagnostic_path_;
};

model::ModelDims dims_for(const TrainConfig& config, const data::Dataset& dataset);

struct RunSummary {
  eval::RankingReport valid;
  eval::RankingReport test;
  TrainState state;
  /// Disagreements with the published split statistics when `config.dataset`
  /// names a known dataset.
  std::vector<std::string> stats_issues;
};

/// Trains and writes checkpoint.bin, manifest.txt, metrics.csv, report.csv and
/// the vocabulary dumps under `out_dir`.
RunSummary run_training(const TrainConfig& config, const std::filesystem::path& out_dir);

/// Trains once per value of `param` (alpha|beta|gamma|dim) and writes sweep.csv.
std::vector<std::pair<double, RunSummary>> run_sweep(const TrainConfig& base,
                                                     std::string_view param,
                                                     std::span<const double> values,
                                                     const std::filesystem::path& out_dir);

}  // namespace ime::train
