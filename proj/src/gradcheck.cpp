#include "ime/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ime/error.hpp"

namespace ime::diff {

namespace {

double evaluate(const LossBuilder& build) {
  Graph g;
  const double v = build(g).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / scale;
}

std::vector<std::size_t> probe_coordinates(std::size_t size, std::size_t max_coords) {
  std::vector<std::size_t> coords;
  if (size <= max_coords || max_coords == 0) {
    coords.resize(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    return coords;
  }
  coords.reserve(max_coords);
  for (std::size_t k = 0; k < max_coords; ++k) coords.push_back(k * size / max_coords);
  return coords;
}

std::vector<Tensor> analytic_gradients(const LossBuilder& build,
                                       std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
  Graph g;
  Var loss = build(g);
  g.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(p->grad);
  return grads;
}

GradReport compare_gradients(const LossBuilder& build, std::span<Parameter* const> params,
                             std::span<const Tensor> analytic, const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw ShapeError("compare_gradients: gradient count does not match parameter count");
  }
  GradReport report;
  const double floor = options.scale_floor * std::max(1.0, std::fabs(evaluate(build)));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    ParamGradError entry{p.name, 0.0, 0};
    for (std::size_t i : probe_coordinates(p.value.size(), options.max_coords_per_param)) {
      const double saved = p.value[i];
      p.value[i] = saved + options.eps;
      const double up = evaluate(build);
      p.value[i] = saved - options.eps;
      const double down = evaluate(build);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[k][i], numeric, floor));
      ++entry.coords_checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

GradReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                      const GradCheckOptions& options) {
  const auto grads = analytic_gradients(build, params);
  return compare_gradients(build, params, grads, options);
}

}  // namespace ime::diff
