#pragma once

// Finite-difference verification of every loss term on a small synthetic batch.

#include <array>
#include <cstdint>
#include <string_view>

#include "ime/gradcheck.hpp"
#include "ime/trainer.hpp"

namespace ime::train {

inline constexpr std::array<std::string_view, 5> kLossTermNames = {"task", "sim", "diff", "stru",
                                                                   "total"};

struct SuiteOptions {
  std::size_t dim = 8;
  std::size_t n_entities = 5;
  std::size_t n_relations = 2;
  std::size_t n_timestamps = 2;
  /// Leading quadruples of the reciprocal-augmented data that form the batch.
  std::size_t batch_size = 6;
  /// Probe point embeddings are drawn at this scale rather than the training
  /// initialization so that gradient components stay well above roundoff.
  double embedding_std = 0.5;
  /// Candidate initializations; the one whose sorted pooling columns are
  /// furthest from a tie is probed.
  std::size_t candidate_seeds = 16;
  diff::GradCheckOptions check;
};

struct TermReport {
  std::string_view term;
  diff::GradReport report;
};

struct SuiteReport {
  std::array<TermReport, 5> terms;
  std::uint64_t probe_seed = 0;
  double sort_gap = 0.0;
  std::size_t batch_size = 0;
  bool passed = false;
};

/// Uses the loss weights, pooling mode and CMD order of `config`; every
/// model dimension other than D comes from `config` too.
SuiteReport gradient_suite(const TrainConfig& config, const SuiteOptions& options = {});

}  // namespace ime::train
