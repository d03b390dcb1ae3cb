// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace regioncap {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

}  // namespace regioncap

/// Tape-based reverse-mode differentiation over Matrix values.
namespace regioncap::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool requires_grad = true;

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph. Only valid while the graph is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// With record_gradients = false no backward closures are kept.
  explicit Graph(bool record_gradients = true)
      : recording_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// The parameter must outlive the graph; its value is referenced, not
  /// copied. backward() accumulates into parameter.grad when
  /// parameter.requires_grad is set.
  Var parameter(Parameter& parameter);

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Matrix& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Matrix& grad(std::size_t id);

  /// Used by op implementations.
  Var emit(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var emit(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  /// Back-propagates from a 1x1 node.
  void backward(Var scalar);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Parameter* parameter = nullptr;
    BackwardFn backward;
  };

  bool recording_;
  std::deque<Node> nodes_;
};

enum class Activation { gelu, relu, identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

// Ops. Shapes are checked and mismatches raise ShapeError.
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// Adds a 1 x cols row vector to every row.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var gelu(Var a);
Var relu(Var a);
Var activate(Var a, Activation act);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Row softmax; with causal set, entry (i, j) for j > i is excluded.
Var softmax_rows(Var a, bool causal = false);
Var log_softmax_rows(Var a);
/// out[k] = a.flat[indices[k]] (or 0 for a negative index), reshaped to
/// rows x cols.
Var gather(Var a, std::size_t rows, std::size_t cols,
           std::vector<std::int64_t> indices);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Per-row dot product, result rows x 1.
Var row_dot(Var a, Var b);
/// Multiplies row i of a by w(i, 0).
Var scale_rows(Var a, Var w);
Var sum(Var a);
/// Negative log-likelihood summed over rows whose target is not `ignore`.
Var nll_sum(Var logprobs, std::span<const int> targets, int ignore);

/// Row-major flatten of a rows x cols matrix into a 1 x (rows*cols) vector
/// and back, expressed through gather.
Var reshape(Var a, std::size_t rows, std::size_t cols);

double gelu_value(double x);

}  // namespace regioncap::ad
