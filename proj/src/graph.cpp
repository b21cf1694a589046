#include "ime/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ime/error.hpp"

namespace ime::diff {

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) { return record(std::move(value), nullptr, "constant"); }

Var Graph::parameter(Parameter& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end()) return Var{this, it->second};
  Var v = record(param.value, nullptr, param.name.c_str());
  nodes_[v.id].param = &param;
  leaves_.emplace(&param, v.id);
  return v;
}

Var Graph::record(Tensor value, BackwardFn backward, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

const Tensor* Graph::grad_if_any(std::size_t id) const {
  const auto& node = nodes_[id];
  return node.grad.empty() ? nullptr : &node.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw Error("backward() on a Var from another graph");
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_string(value(loss.id).shape()));
  }
  grad(loss.id).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || node.grad.empty()) continue;
    auto& pg = node.param->grad;
    if (pg.shape() != node.grad.shape()) pg = Tensor(node.grad.shape());
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += node.grad[k];
  }
}

namespace {

void require_same_graph(Var a, Var b, const char* op) {
  if (a.graph != b.graph) throw Error(std::string(op) + ": operands from different graphs");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_graph(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

void require_rank(Var a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(a.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// df(x, y) is dy/dx given input x and output y.
template <class F, class DF>
Var unary(Var a, const char* op, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, df](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& x = g.value(in);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad(in);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
      },
      op);
}

// Scalar output from a rank-0 shape.
Tensor scalar_tensor(double v) { return Tensor::scalar(v); }

}  // namespace

// ---- elementwise ---------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(
      std::move(y),
      [ia, ib](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& ga = g.grad(ia);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        Tensor& gb = g.grad(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(
      std::move(y),
      [ia, ib](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& ga = g.grad(ia);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        Tensor& gb = g.grad(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(
      std::move(y),
      [ia, ib](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        Tensor& ga = g.grad(ia);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        Tensor& gb = g.grad(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
      },
      "mul");
}

Var affine(Var a, double scale, double shift) {
  return unary(
      a, "affine", [scale, shift](double x) { return scale * x + shift; },
      [scale](double, double) { return scale; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(Var a) {
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var powi(Var a, int k) {
  if (k < 1) throw Error("powi: exponent must be >= 1");
  auto ipow = [](double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  };
  return unary(
      a, "powi", [k, ipow](double x) { return ipow(x, k); },
      [k, ipow](double x, double) { return k * ipow(x, k - 1); });
}

// ---- linear algebra and layout ----------------------------------------------

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  }
  const auto ia = a.id, ib = b.id;
  return a.graph->record(
      std::move(y),
      [ia, ib, m, k, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        Tensor& ga = g.grad(ia);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
        Tensor& gb = g.grad(ib);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gy[i * n + j];
          }
      },
      "matmul");
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, m, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad(in);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j * m + i];
      },
      "transpose");
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Graph* graph = parts[0].graph;
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_graph(parts[0], p, "concat");
    require_rank(p, 2, "concat");
    if (p.value().rows() != rows) {
      throw ShapeError("concat: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor y({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&x[r * widths[k]], widths[k], &y[r * total + offset]);
    offset += widths[k];
  }
  return graph->record(
      std::move(y),
      [ids, widths, rows, total](Graph& g, std::size_t self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const Tensor& gy = g.grad(self);
          Tensor& gx = g.grad(ids[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c)
              gx[r * widths[k] + c] += gy[r * total + offset + c];
          offset += widths[k];
        }
      },
      "concat");
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  require_rank(table, 2, "gather_rows");
  const Tensor& t = table.value();
  const std::size_t n = t.rows(), d = t.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor y({idx.size(), d});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    if (idx[b] >= n) {
      throw IndexError("gather_rows: row " + std::to_string(idx[b]) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(&t[idx[b] * d], d, &y[b * d]);
  }
  const auto in = table.id;
  return table.graph->record(
      std::move(y),
      [in, idx, d](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gt = g.grad(in);
        for (std::size_t b = 0; b < idx.size(); ++b)
          for (std::size_t c = 0; c < d; ++c) gt[idx[b] * d + c] += gy[b * d + c];
      },
      "gather_rows");
}

Var pick(Var a, std::span<const std::size_t> cols) {
  require_rank(a, 2, "pick");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (cols.size() != m) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " +
                     std::to_string(m) + " rows");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  Tensor y({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    if (idx[r] >= n) throw IndexError("pick: column " + std::to_string(idx[r]) + " out of range");
    y[r] = x[r * n + idx[r]];
  }
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, idx, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < idx.size(); ++r) gx[r * n + idx[r]] += gy[r];
      },
      "pick");
}

Var row_dot(Var a, Var b) {
  require_same_shape(a, b, "row_dot");
  require_rank(a, 2, "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor y({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += av[r * n + c] * bv[r * n + c];
    y[r] = acc;
  }
  const auto ia = a.id, ib = b.id;
  return a.graph->record(
      std::move(y),
      [ia, ib, m, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        Tensor& ga = g.grad(ia);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += gy[r] * bv[r * n + c];
        Tensor& gb = g.grad(ib);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) gb[r * n + c] += gy[r] * av[r * n + c];
      },
      "row_dot");
}

Var broadcast_rows(Var a, std::size_t rows) {
  require_rank(a, 2, "broadcast_rows");
  const Tensor& x = a.value();
  if (x.rows() != 1) throw ShapeError("broadcast_rows: expected [1 x D], got " + shape_string(x.shape()));
  const std::size_t d = x.cols();
  Tensor y({rows, d});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&x[0], d, &y[r * d]);
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, rows, d](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) gx[c] += gy[r * d + c];
      },
      "broadcast_rows");
}

Var stack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack: no operands");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 2) throw ShapeError("stack: operands must be rank 2, got " + shape_string(s0));
  const std::size_t b = s0[0], d = s0[1], n = parts.size();
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_shape(parts[0], p, "stack");
    ids.push_back(p.id);
  }
  Tensor y({b, n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& x = parts[i].value();
    for (std::size_t r = 0; r < b; ++r) std::copy_n(&x[r * d], d, &y[(r * n + i) * d]);
  }
  return parts[0].graph->record(
      std::move(y),
      [ids, b, n, d](Graph& g, std::size_t self) {
        for (std::size_t i = 0; i < n; ++i) {
          const Tensor& gy = g.grad(self);
          Tensor& gx = g.grad(ids[i]);
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += gy[(r * n + i) * d + c];
        }
      },
      "stack");
}

// ---- reductions -------------------------------------------------------------

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  const auto in = a.id;
  return a.graph->record(
      scalar_tensor(acc),
      [in](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0];
        Tensor& gx = g.grad(in);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
      },
      "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return affine(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var a) {
  require_rank(a, 2, "mean_rows");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ShapeError("mean_rows of zero rows");
  Tensor y({1, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y[c] += x[r * n + c];
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t c = 0; c < n; ++c) y[c] *= inv;
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, m, n, inv](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += gy[c] * inv;
      },
      "mean_rows");
}

Var frobenius_sq(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v * v;
  const auto in = a.id;
  return a.graph->record(
      scalar_tensor(acc),
      [in](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0];
        const Tensor& x = g.value(in);
        Tensor& gx = g.grad(in);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * gy * x[i];
      },
      "frobenius_sq");
}

Var l2_norm(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v * v;
  const double norm = std::sqrt(acc);
  const auto in = a.id;
  return a.graph->record(
      scalar_tensor(norm),
      [in, norm](Graph& g, std::size_t self) {
        if (norm == 0.0) return;
        const double gy = g.grad(self)[0];
        const Tensor& x = g.value(in);
        Tensor& gx = g.grad(in);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy * x[i] / norm;
      },
      "l2_norm");
}

// ---- normalizations ---------------------------------------------------------

Var softmax(Var a) {
  require_rank(a, 2, "softmax");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const double mx = *std::max_element(&x[r * n], &x[r * n] + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (y[r * n + c] = std::exp(x[r * n + c] - mx));
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] /= z;
  }
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, m, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < m; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < n; ++c) dot += gy[r * n + c] * y[r * n + c];
          for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += y[r * n + c] * (gy[r * n + c] - dot);
        }
      },
      "softmax");
}

Var log_softmax(Var a) {
  require_rank(a, 2, "log_softmax");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const double mx = *std::max_element(&x[r * n], &x[r * n] + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[r * n + c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = x[r * n + c] - lse;
  }
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, m, n](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < m; ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < n; ++c) total += gy[r * n + c];
          for (std::size_t c = 0; c < n; ++c)
            gx[r * n + c] += gy[r * n + c] - std::exp(y[r * n + c]) * total;
        }
      },
      "log_softmax");
}

Var l2_normalize(Var a) {
  require_rank(a, 2, "l2_normalize");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += x[r * n + c] * x[r * n + c];
    norms[r] = std::sqrt(acc);
    if (norms[r] == 0.0) throw NumericError("l2_normalize of zero-norm row " + std::to_string(r));
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = x[r * n + c] / norms[r];
  }
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, m, n, norms](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < m; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * gy[r * n + c];
          for (std::size_t c = 0; c < n; ++c)
            gx[r * n + c] += (gy[r * n + c] - y[r * n + c] * dot) / norms[r];
        }
      },
      "l2_normalize");
}

// ---- pooling ------------------------------------------------------------------

Var sort_desc_per_dimension(Var a) {
  const Shape& s = a.shape();
  std::size_t b = 0, n = 0, d = 0;
  if (s.size() == 2) {
    b = 1, n = s[0], d = s[1];
  } else if (s.size() == 3) {
    b = s[0], n = s[1], d = s[2];
  } else {
    throw ShapeError("sort_desc_per_dimension: expected rank 2 or 3, got " + shape_string(s));
  }
  const Tensor& x = a.value();
  Tensor y(s);
  // perm[(r * n + i) * d + c] = source position of output slot i in column (r, c).
  std::vector<std::size_t> perm(b * n * d);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto at = [&](std::size_t i) { return x[(r * n + i) * d + c]; };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t p, std::size_t q) { return at(p) > at(q); });
      for (std::size_t i = 0; i < n; ++i) {
        perm[(r * n + i) * d + c] = order[i];
        y[(r * n + i) * d + c] = at(order[i]);
      }
    }
  }
  const auto in = a.id;
  return a.graph->record(
      std::move(y),
      [in, perm = std::move(perm), b, n, d](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad(in);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) {
              const std::size_t slot = (r * n + i) * d + c;
              gx[(r * n + perm[slot]) * d + c] += gy[slot];
            }
      },
      "sort_desc_per_dimension");
}

Var weighted_sum_positions(Var x, Var w) {
  require_same_graph(x, w, "weighted_sum_positions");
  const Shape& s = x.shape();
  std::size_t b = 0, n = 0, d = 0;
  if (s.size() == 2) {
    b = 1, n = s[0], d = s[1];
  } else if (s.size() == 3) {
    b = s[0], n = s[1], d = s[2];
  } else {
    throw ShapeError("weighted_sum_positions: expected rank 2 or 3, got " + shape_string(s));
  }
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.size() != n) {
    throw ShapeError("weighted_sum_positions: " + std::to_string(wv.size()) +
                     " weights for " + std::to_string(n) + " positions");
  }
  Tensor y({b, d});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) y[r * d + c] += wv[i] * xv[(r * n + i) * d + c];
  const auto ix = x.id, iw = w.id;
  return x.graph->record(
      std::move(y),
      [ix, iw, b, n, d](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(ix);
        const Tensor& wv = g.value(iw);
        Tensor& gx = g.grad(ix);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) gx[(r * n + i) * d + c] += wv[i] * gy[r * d + c];
        Tensor& gw = g.grad(iw);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) gw[i] += xv[(r * n + i) * d + c] * gy[r * d + c];
      },
      "weighted_sum_positions");
}

}  // namespace ime::diff
