#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ime/data.hpp"
#include "ime/model.hpp"

namespace ime::eval {

struct RankingReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t n_queries = 0;
};

struct EvalOptions {
  model::PoolMode pool = model::PoolMode::amp;
  /// 0 means "use IME_THREADS, else 1".
  std::size_t threads = 0;
  std::size_t batch_size = 256;
};

/// Thread cap from the IME_THREADS environment variable (default 1).
std::size_t threads_from_env();

/// Filtered rank of `target`: 1 + #(strictly higher) + #(ties) / 2, ignoring
/// every candidate in `true_tails` (sorted ascending) other than the target itself.
double rank_from_scores(std::span<const double> scores, std::size_t target,
                        std::span<const std::size_t> true_tails);

double rank_query(const model::ImeParams& params, const data::Quadruple& q,
                  const data::FilterIndex& filter, model::PoolMode pool = model::PoolMode::amp);

/// Ranks for each query, in query order.
std::vector<double> rank_queries(const model::ImeParams& params,
                                 std::span<const data::Quadruple> queries,
                                 const data::FilterIndex& filter, const EvalOptions& options = {});

/// MRR = mean 1/rank, Hits@N = fraction with rank <= N. Empty input is an error.
RankingReport summarize(std::span<const double> ranks);

/// Evaluates a reciprocal-augmented split.
RankingReport evaluate(const model::ImeParams& params, std::span<const data::Quadruple> split,
                       const data::FilterIndex& filter, const EvalOptions& options = {});

/// Report per relation index (augmented indices kept distinct).
std::map<std::size_t, RankingReport> evaluate_per_relation(
    const model::ImeParams& params, std::span<const data::Quadruple> split,
    const data::FilterIndex& filter, const EvalOptions& options = {});

std::string report_csv_header();
std::string report_csv_row(const std::string& split, const RankingReport& report);
std::string report_table(const std::string& split, const RankingReport& report);

}  // namespace ime::eval
