#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ime/graph.hpp"

namespace ime::diff {

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

struct GradReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Denominator floor of the relative error, multiplied by max(1, |loss|)
  /// since the roundoff of a central difference grows with the loss value.
  /// Components below the floor are effectively compared in absolute terms.
  double scale_floor = 1e-6;
  /// Larger tensors are probed on an evenly strided subset of coordinates.
  std::size_t max_coords_per_param = 256;
};

/// Builds the scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Coordinates probed for a tensor of `size` values.
std::vector<std::size_t> probe_coordinates(std::size_t size, std::size_t max_coords);

/// Reverse-mode gradients of the loss, one tensor per parameter.
std::vector<Tensor> analytic_gradients(const LossBuilder& build,
                                       std::span<Parameter* const> params);

/// Compares `analytic` against central differences (f(x+eps) - f(x-eps)) / 2eps.
GradReport compare_gradients(const LossBuilder& build, std::span<Parameter* const> params,
                             std::span<const Tensor> analytic,
                             const GradCheckOptions& options = {});

GradReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                      const GradCheckOptions& options = {});

}  // namespace ime::diff
