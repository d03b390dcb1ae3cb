// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "regioncap/errors.hpp"

namespace regioncap {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("matrix value count " + std::to_string(values_.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return std::numeric_limits<double>::infinity();
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace regioncap

namespace regioncap::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape(a) +
                   " and " + shape(b));
}

// c += a * b
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.values().data() + i * m;
    const double* arow = a.values().data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.values().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * b^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.values().data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.values().data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) += s;
    }
  }
}

// c += a^T * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* arow = a.values().data() + r * k;
    const double* brow = b.values().data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.values().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void accumulate(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.values()[i] += src.values()[i];
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

// ---------------------------------------------------------------- Var/Graph

const Matrix& Var::value() const { return graph_->value(id_); }

const Matrix& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Matrix& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& parameter) {
  const bool tracked = recording_ && parameter.requires_grad;
  nodes_.push_back(Node{{}, &parameter.value, {}, tracked,
                        tracked ? &parameter : nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::emit(Matrix value, std::initializer_list<Var> inputs,
                BackwardFn fn) {
  return emit(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Graph::emit(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool tracked = false;
  if (recording_) {
    for (const Var& v : inputs) tracked = tracked || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), nullptr, {}, tracked, nullptr,
                        tracked ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var scalar) {
  if (!recording_) throw Error("backward() on a graph without gradient recording");
  const Matrix& v = value(scalar.id());
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward() needs a 1x1 node, got " + shape(v));
  }
  if (!nodes_[scalar.id()].needs_grad) return;
  grad(scalar.id())(0, 0) += 1.0;
  for (std::size_t id = scalar.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.parameter) {
      Parameter& p = *n.parameter;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.zero_grad();
      }
      accumulate(p.grad, n.grad);
    }
  }
}

// ---------------------------------------------------------------- ops

Activation activation_from_string(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) gemm_nt(d, g.value(b.id()), g.grad(a.id()));
    if (g.needs_grad(b.id())) gemm_tn(g.value(a.id()), d, g.grad(b.id()));
  });
}

Var matmul_nt(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  Matrix out(av.rows(), bv.rows());
  gemm_nt(av, bv, out);
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    // out = a b^T: da = d b, db = d^T a
    if (g.needs_grad(a.id())) gemm_nn(d, g.value(b.id()), g.grad(a.id()));
    if (g.needs_grad(b.id())) gemm_tn(d, g.value(a.id()), g.grad(b.id()));
  });
}

Var transpose(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  return a.graph().emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < da.rows(); ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += d(j, i);
  });
}

Var add(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("add", av, bv);
  Matrix out = av;
  accumulate(out, bv);
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) accumulate(g.grad(a.id()), d);
    if (g.needs_grad(b.id())) accumulate(g.grad(b.id()), d);
  });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail("add_row", av, rv);
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  return a.graph().emit(std::move(out), {a, row},
                        [a, row](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) accumulate(g.grad(a.id()), d);
    if (g.needs_grad(row.id())) {
      Matrix& dr = g.grad(row.id());
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) dr(0, j) += d(i, j);
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= s;
  return a.graph().emit(std::move(out), {a}, [a, s](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < d.size(); ++i) da.values()[i] += s * d.values()[i];
  });
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = gelu_value(v);
  return a.graph().emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& x = g.value(a.id());
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < d.size(); ++i)
      da.values()[i] += d.values()[i] * gelu_grad(x.values()[i]);
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = std::max(v, 0.0);
  return a.graph().emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& x = g.value(a.id());
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x.values()[i] > 0.0) da.values()[i] += d.values()[i];
  });
}

Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::gelu: return gelu(a);
    case Activation::relu: return relu(a);
    case Activation::identity: return a;
  }
  return a;
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (gain.rows() != 1 || gain.cols() != c) shape_fail("layer_norm", xv, gain.value());
  if (bias.rows() != 1 || bias.cols() != c) shape_fail("layer_norm", xv, bias.value());
  Matrix normed(n, c);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) normed(i, j) = (xv(i, j) - mean) * inv_std[i];
  }
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  Matrix out(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = normed(i, j) * gv(0, j) + bv(0, j);
  return x.graph().emit(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normed = std::move(normed), inv_std = std::move(inv_std)](
          Graph& g, std::size_t self) {
        const Matrix& d = g.grad(self);
        const std::size_t rows = d.rows(), cols = d.cols();
        if (g.needs_grad(gain.id())) {
          Matrix& dg = g.grad(gain.id());
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) dg(0, j) += d(i, j) * normed(i, j);
        }
        if (g.needs_grad(bias.id())) {
          Matrix& db = g.grad(bias.id());
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) db(0, j) += d(i, j);
        }
        if (g.needs_grad(x.id())) {
          const Matrix& gv2 = g.value(gain.id());
          Matrix& dx = g.grad(x.id());
          std::vector<double> dn(cols);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              dn[j] = d(i, j) * gv2(0, j);
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normed(i, j);
            }
            mean_dn /= static_cast<double>(cols);
            mean_dn_n /= static_cast<double>(cols);
            for (std::size_t j = 0; j < cols; ++j) {
              dx(i, j) += inv_std[i] * (dn[j] - mean_dn - normed(i, j) * mean_dn_n);
            }
          }
        }
      });
}

Var softmax_rows(Var a, bool causal) {
  const Matrix& av = a.value();
  if (causal && av.rows() > av.cols()) {
    throw ShapeError("causal softmax needs cols >= rows, got " + shape(av));
  }
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const std::size_t limit = causal ? i + 1 : av.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, av(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      out(i, j) = std::exp(av(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < limit; ++j) out(i, j) /= total;
  }
  return a.graph().emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& s = g.value(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) dot += d(i, j) * s(i, j);
      for (std::size_t j = 0; j < s.cols(); ++j) da(i, j) += s(i, j) * (d(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < av.cols(); ++j) mx = std::max(mx, av(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) total += std::exp(av(i, j) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) - lse;
  }
  return a.graph().emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& lp = g.value(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < lp.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < lp.cols(); ++j) total += d(i, j);
      for (std::size_t j = 0; j < lp.cols(); ++j)
        da(i, j) += d(i, j) - std::exp(lp(i, j)) * total;
    }
  });
}

Var gather(Var a, std::size_t rows, std::size_t cols,
           std::vector<std::int64_t> indices) {
  const Matrix& av = a.value();
  if (indices.size() != rows * cols) {
    throw ShapeError("gather: " + std::to_string(indices.size()) +
                     " indices for a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " output");
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::int64_t idx = indices[k];
    if (idx < 0) continue;
    if (static_cast<std::size_t>(idx) >= av.size()) {
      throw ShapeError("gather: index " + std::to_string(idx) +
                       " out of range for " + shape(av));
    }
    out.values()[k] = av.values()[static_cast<std::size_t>(idx)];
  }
  return a.graph().emit(std::move(out), {a},
                        [a, indices = std::move(indices)](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= 0) da.values()[static_cast<std::size_t>(indices[k])] += d.values()[k];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const Matrix& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + offset);
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().emit(
      std::move(out), parts,
      [inputs, offsets](Graph& g, std::size_t self) {
        const Matrix& d = g.grad(self);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!g.needs_grad(inputs[k].id())) continue;
          Matrix& dp = g.grad(inputs[k].id());
          for (std::size_t i = 0; i < dp.rows(); ++i)
            for (std::size_t j = 0; j < dp.cols(); ++j) dp(i, j) += d(i, offsets[k] + j);
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(values.size());
    values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().emit(
      Matrix(rows, cols, std::move(values)), parts,
      [inputs, offsets](Graph& g, std::size_t self) {
        const Matrix& d = g.grad(self);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!g.needs_grad(inputs[k].id())) continue;
          Matrix& dp = g.grad(inputs[k].id());
          for (std::size_t i = 0; i < dp.size(); ++i)
            dp.values()[i] += d.values()[offsets[k] + i];
        }
      });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Matrix& av = a.value();
  if (start + count > av.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape(av));
  }
  const std::size_t c = av.cols();
  Matrix out(count, c,
             std::vector<double>(av.values().begin() + static_cast<std::ptrdiff_t>(start * c),
                                 av.values().begin() + static_cast<std::ptrdiff_t>((start + count) * c)));
  return a.graph().emit(std::move(out), {a}, [a, start](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    Matrix& da = g.grad(a.id());
    const std::size_t off = start * da.cols();
    for (std::size_t i = 0; i < d.size(); ++i) da.values()[off + i] += d.values()[i];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& av = a.value();
  if (start + count > av.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape(av));
  }
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  return a.graph().emit(std::move(out), {a}, [a, start](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    Matrix& da = g.grad(a.id());
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) da(i, start + j) += d(i, j);
  });
}

Var row_dot(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("row_dot", av, bv);
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * bv(i, j);
    out(i, 0) = s;
  }
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& av2 = g.value(a.id());
    const Matrix& bv2 = g.value(b.id());
    if (g.needs_grad(a.id())) {
      Matrix& da = g.grad(a.id());
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += d(i, 0) * bv2(i, j);
    }
    if (g.needs_grad(b.id())) {
      Matrix& db = g.grad(b.id());
      for (std::size_t i = 0; i < db.rows(); ++i)
        for (std::size_t j = 0; j < db.cols(); ++j) db(i, j) += d(i, 0) * av2(i, j);
    }
  });
}

Var scale_rows(Var a, Var w) {
  const Matrix& av = a.value();
  const Matrix& wv = w.value();
  if (wv.rows() != av.rows() || wv.cols() != 1) shape_fail("scale_rows", av, wv);
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= wv(i, 0);
  return a.graph().emit(std::move(out), {a, w}, [a, w](Graph& g, std::size_t self) {
    const Matrix& d = g.grad(self);
    const Matrix& av2 = g.value(a.id());
    const Matrix& wv2 = g.value(w.id());
    if (g.needs_grad(a.id())) {
      Matrix& da = g.grad(a.id());
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += d(i, j) * wv2(i, 0);
    }
    if (g.needs_grad(w.id())) {
      Matrix& dw = g.grad(w.id());
      for (std::size_t i = 0; i < av2.rows(); ++i)
        for (std::size_t j = 0; j < av2.cols(); ++j) dw(i, 0) += d(i, j) * av2(i, j);
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().emit(Matrix(1, 1, s), {a}, [a](Graph& g, std::size_t self) {
    const double d = g.grad(self)(0, 0);
    for (double& v : g.grad(a.id()).values()) v += d;
  });
}

Var nll_sum(Var logprobs, std::span<const int> targets, int ignore) {
  const Matrix& lp = logprobs.value();
  if (targets.size() != lp.rows()) {
    throw ShapeError("nll_sum: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(lp.rows()) + " positions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    if (t == ignore) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= lp.cols()) {
      throw VocabError("target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(lp.cols()));
    }
    total -= lp(i, static_cast<std::size_t>(t));
  }
  std::vector<int> kept(targets.begin(), targets.end());
  return logprobs.graph().emit(
      Matrix(1, 1, total), {logprobs},
      [logprobs, kept = std::move(kept), ignore](Graph& g, std::size_t self) {
        const double d = g.grad(self)(0, 0);
        Matrix& dl = g.grad(logprobs.id());
        for (std::size_t i = 0; i < kept.size(); ++i) {
          if (kept[i] != ignore) dl(i, static_cast<std::size_t>(kept[i])) -= d;
        }
      });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape(a.value()) + " as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<std::int64_t> idx(rows * cols);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  return gather(a, rows, cols, std::move(idx));
}

}  // namespace regioncap::ad
