#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Graph records every primitive applied during a forward pass. Calling
// backward() on a scalar walks the record in reverse and accumulates
// gradients; leaves created with Graph::parameter() push their gradient into
// the bound Parameter. A Graph is single-threaded; independent graphs may run
// concurrently as long as they only read shared parameters.

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ime/tensor.hpp"

namespace ime::diff {

class Graph;

/// Handle to a value recorded in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `param`; repeated calls return the same Var.
  Var parameter(Parameter& param);

  /// Seeds d(loss)/d(loss) = 1, propagates, then adds leaf gradients into
  /// their Parameters. `loss` must hold exactly one value.
  void backward(Var loss);

  // Primitive-author interface.
  /// Records a primitive's output; a non-finite value raises NumericError naming `op`.
  Var record(Tensor value, BackwardFn backward, const char* op);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient slot of node `id`, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  const Tensor* grad_if_any(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> leaves_;
};

// ---- elementwise ---------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// scale * a + shift
Var affine(Var a, double scale, double shift = 0.0);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
/// Subgradient 0 at 0.
Var abs(Var a);
Var powi(Var a, int k);

// ---- linear algebra and layout ----------------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Feature-axis concatenation of rank-2 tensors with equal row counts.
Var concat(std::span<const Var> parts);
/// Rows of `table` selected by `rows`; gradient scatters back additively.
Var gather_rows(Var table, std::span<const std::size_t> rows);
/// out[b] = a[b, cols[b]] as a [B x 1] column.
Var pick(Var a, std::span<const std::size_t> cols);
/// Per-row inner product of two [B x D] tensors, [B x 1].
Var row_dot(Var a, Var b);
/// [1 x D] repeated to [rows x D].
Var broadcast_rows(Var a, std::size_t rows);
/// n tensors of shape [B x D] stacked to [B x n x D].
Var stack(std::span<const Var> parts);

// ---- reductions -------------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
/// Column means of a [B x D] tensor, [1 x D].
Var mean_rows(Var a);
Var frobenius_sq(Var a);
/// Euclidean norm of all values; subgradient 0 at the origin.
Var l2_norm(Var a);

// ---- normalizations ---------------------------------------------------------
/// Row-wise softmax of a rank-2 tensor.
Var softmax(Var a);
Var log_softmax(Var a);
/// Row-wise unit normalization; a zero row is an error.
Var l2_normalize(Var a);

// ---- pooling ------------------------------------------------------------------
/// Sorts descending along the position axis: axis 0 of [n x D], axis 1 of
/// [B x n x D]. Stable, and the gradient follows the forward permutation.
Var sort_desc_per_dimension(Var a);
/// sum_i w[i] * x[.., i, ..] over the position axis; `w` has n values.
Var weighted_sum_positions(Var x, Var w);

}  // namespace ime::diff
