// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-based reverse-mode differentiation over dense matrices. Operations
// record a value eagerly plus a closure that scatters the output gradient
// to the parents; backward() walks the tape in reverse creation order,
// which is a topological order by construction.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relalign/matrix.hpp"
#include "relalign/tensor_ops.hpp"

namespace relalign::ad {

class Tape;

/// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  std::size_t size() const { return nodes_.size(); }

  /// Differentiable leaf.
  Var param(Matrix value) { return push(std::move(value), true, {}); }

  /// Non-differentiable leaf; requesting its gradient is an error.
  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  const Matrix& value(Var v) const { return node(v).value; }

  /// Gradient of the last backward() target with respect to v.
  const Matrix& grad(Var v) {
    Node& n = node(v);
    if (!n.requires_grad)
      throw std::logic_error("autodiff: gradient requested for a detached value");
    if (!backward_done_)
      throw std::logic_error("autodiff: gradient requested before backward()");
    ensure_grad(v.id_);
    return n.grad;
  }

  void backward(Var loss) {
    Node& top = node(loss);
    if (top.value.rows() != 1 || top.value.cols() != 1)
      throw std::invalid_argument("autodiff: backward target must be 1x1");
    if (!top.requires_grad)
      throw std::logic_error("autodiff: backward target is detached");
    if (backward_done_) throw std::logic_error("autodiff: backward already run on this tape");
    ensure_grad(loss.id_);
    top.grad(0, 0) = 1.0;
    top.grad_seen = true;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad_seen && n.backprop) n.backprop();
    }
    backward_done_ = true;
  }

  // ---- elementwise and scalar ops ----

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Matrix out = relalign::add(value(a), value(b));
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Matrix out = relalign::sub(value(a), value(b));
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      accumulate(a, g);
      if (needs_grad(b)) {
        Matrix neg = g;
        for (double& x : neg.data()) x = -x;
        accumulate_moved(b, std::move(neg));
      }
    });
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Matrix out = value(a);
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= value(b).data()[k];
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs_grad(a)) {
        Matrix da = g;
        for (std::size_t k = 0; k < da.size(); ++k) da.data()[k] *= value(b).data()[k];
        accumulate_moved(a, std::move(da));
      }
      if (needs_grad(b)) {
        Matrix db = g;
        for (std::size_t k = 0; k < db.size(); ++k) db.data()[k] *= value(a).data()[k];
        accumulate_moved(b, std::move(db));
      }
    });
  }

  Var scale(Var a, double c) {
    Matrix out = relalign::scale(value(a), c);
    return unary_binary(std::move(out), {a}, [this, a, c](const Matrix& g) {
      if (!needs_grad(a)) return;
      accumulate_moved(a, relalign::scale(g, c));
    });
  }

  Var add_scalar(Var a, double c) {
    Matrix out = value(a);
    for (double& x : out.data()) x += c;
    return unary_binary(std::move(out), {a},
                        [this, a](const Matrix& g) { accumulate(a, g); });
  }

  Var relu(Var a) {
    Matrix out = value(a);
    for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
    return unary_binary(std::move(out), {a}, [this, a](const Matrix& g) {
      if (!needs_grad(a)) return;
      Matrix da = g;
      const Matrix& x = value(a);
      for (std::size_t k = 0; k < da.size(); ++k)
        if (x.data()[k] <= 0.0) da.data()[k] = 0.0;
      accumulate_moved(a, std::move(da));
    });
  }

  /// ln(max(x, kProbFloor)); gradient is zero on the clamped region.
  Var log_clamped(Var a) {
    Matrix out = value(a);
    for (double& x : out.data()) x = std::log(std::max(x, kProbFloor));
    return unary_binary(std::move(out), {a}, [this, a](const Matrix& g) {
      if (!needs_grad(a)) return;
      Matrix da = g;
      const Matrix& x = value(a);
      for (std::size_t k = 0; k < da.size(); ++k) {
        da.data()[k] = x.data()[k] > kProbFloor ? da.data()[k] / x.data()[k] : 0.0;
      }
      accumulate_moved(a, std::move(da));
    });
  }

  // ---- matrix ops ----

  Var matmul(Var a, Var b) {
    Matrix out = relalign::matmul(value(a), value(b));
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs_grad(a)) accumulate_moved(a, relalign::matmul(g, relalign::transpose(value(b))));
      if (needs_grad(b)) accumulate_moved(b, relalign::matmul(relalign::transpose(value(a)), g));
    });
  }

  Var transpose(Var a) {
    Matrix out = relalign::transpose(value(a));
    return unary_binary(std::move(out), {a}, [this, a](const Matrix& g) {
      if (needs_grad(a)) accumulate_moved(a, relalign::transpose(g));
    });
  }

  Var concat_rows(Var a, Var b) {
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    if (va.cols() != vb.cols()) throw std::invalid_argument("concat_rows: column mismatch");
    Matrix out(va.rows() + vb.rows(), va.cols());
    for (std::size_t i = 0; i < va.rows(); ++i)
      for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(i, j);
    for (std::size_t i = 0; i < vb.rows(); ++i)
      for (std::size_t j = 0; j < vb.cols(); ++j) out(va.rows() + i, j) = vb(i, j);
    const std::size_t split = va.rows();
    return unary_binary(std::move(out), {a, b}, [this, a, b, split](const Matrix& g) {
      if (needs_grad(a)) {
        Matrix da(split, g.cols());
        for (std::size_t i = 0; i < split; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) da(i, j) = g(i, j);
        accumulate_moved(a, std::move(da));
      }
      if (needs_grad(b)) {
        Matrix db(g.rows() - split, g.cols());
        for (std::size_t i = 0; i < g.rows() - split; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) db(i, j) = g(split + i, j);
        accumulate_moved(b, std::move(db));
      }
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const Matrix& v = value(p);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
      off += v.cols();
    }
    std::vector<Var> captured = parts;
    return unary_binary(std::move(out), parts, [this, captured](const Matrix& g) {
      std::size_t off = 0;
      for (Var p : captured) {
        const std::size_t w = value(p).cols();
        if (needs_grad(p)) {
          Matrix dp(g.rows(), w);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) dp(i, j) = g(i, off + j);
          accumulate_moved(p, std::move(dp));
        }
        off += w;
      }
    });
  }

  /// Contiguous submatrix [r0, r1) x [c0, c1).
  Var block(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    const Matrix& v = value(a);
    if (r1 > v.rows() || c1 > v.cols() || r0 >= r1 || c0 >= c1)
      throw std::invalid_argument("block: invalid range");
    Matrix out(r1 - r0, c1 - c0);
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = c0; j < c1; ++j) out(i - r0, j - c0) = v(i, j);
    return unary_binary(std::move(out), {a}, [this, a, r0, c0](const Matrix& g) {
      if (!needs_grad(a)) return;
      Matrix& da = grad_buffer(a);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) da(r0 + i, c0 + j) += g(i, j);
    });
  }

  /// out[i][j] = a[rows[i]][cols[j]]. Duplicate indices accumulate in the
  /// backward scatter.
  Var gather(Var a, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
    const Matrix& v = value(a);
    if (rows.empty() || cols.empty()) throw std::invalid_argument("gather: empty index set");
    for (std::size_t r : rows)
      if (r >= v.rows()) throw std::out_of_range("gather: row index " + std::to_string(r));
    for (std::size_t c : cols)
      if (c >= v.cols()) throw std::out_of_range("gather: col index " + std::to_string(c));
    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = v(rows[i], cols[j]);
    return unary_binary(std::move(out), {a},
                        [this, a, rows = std::move(rows), cols = std::move(cols)](const Matrix& g) {
                          if (!needs_grad(a)) return;
                          Matrix& da = grad_buffer(a);
                          for (std::size_t i = 0; i < rows.size(); ++i)
                            for (std::size_t j = 0; j < cols.size(); ++j)
                              da(rows[i], cols[j]) += g(i, j);
                        });
  }

  // ---- normalizations and reductions ----

  Var row_softmax(Var a, double sigma_scale) {
    Matrix out = relalign::row_softmax(value(a), sigma_scale).matrix();
    Var r = unary_binary(std::move(out), {a}, {});
    node(r).backprop = [this, a, r, sigma_scale]() {
      if (!needs_grad(a) || !nodes_[r.id()].grad_seen) return;
      const Matrix& y = value(r);
      const Matrix& g = nodes_[r.id()].grad;
      Matrix da(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j)
          da(i, j) = sigma_scale * y(i, j) * (g(i, j) - dot);
      }
      accumulate_moved(a, std::move(da));
    };
    return r;
  }

  /// Row-wise layer normalization without affine parameters.
  Var layer_norm(Var a, double eps = 1e-5) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    std::vector<double> inv_std(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) mu += x(i, j);
      mu /= static_cast<double>(x.cols());
      double var = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double d = x(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(x.cols());
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mu) * inv_std[i];
    }
    Var r = unary_binary(std::move(out), {a}, {});
    node(r).backprop = [this, a, r, inv_std = std::move(inv_std)]() {
      if (!needs_grad(a) || !nodes_[r.id()].grad_seen) return;
      const Matrix& y = value(r);
      const Matrix& g = nodes_[r.id()].grad;
      Matrix da(y.rows(), y.cols());
      const double n = static_cast<double>(y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double gm = 0.0, gym = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) {
          gm += g(i, j);
          gym += g(i, j) * y(i, j);
        }
        gm /= n;
        gym /= n;
        for (std::size_t j = 0; j < y.cols(); ++j)
          da(i, j) = inv_std[i] * (g(i, j) - gm - y(i, j) * gym);
      }
      accumulate_moved(a, std::move(da));
    };
    return r;
  }

  Var sum(Var a) {
    double total = 0.0;
    for (double v : value(a).data()) total += v;
    Matrix out(1, 1);
    out(0, 0) = total;
    return unary_binary(std::move(out), {a}, [this, a](const Matrix& g) {
      if (!needs_grad(a)) return;
      Matrix& da = grad_buffer(a);
      const double g00 = g(0, 0);
      for (double& x : da.data()) x += g00;
    });
  }

  /// Column means, i.e. the average over rows; result is 1 x cols.
  Var mean_rows(Var a) {
    const Matrix& v = value(a);
    Matrix out(1, v.cols());
    for (std::size_t j = 0; j < v.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < v.rows(); ++i) s += v(i, j);
      out(0, j) = s / static_cast<double>(v.rows());
    }
    return unary_binary(std::move(out), {a}, [this, a](const Matrix& g) {
      if (!needs_grad(a)) return;
      Matrix& da = grad_buffer(a);
      const double inv = 1.0 / static_cast<double>(da.rows());
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g(0, j) * inv;
    });
  }

  /// Broadcast-add a 1 x cols row vector to every row.
  Var add_rowvec(Var a, Var v) {
    const Matrix& va = value(a);
    const Matrix& vv = value(v);
    if (vv.rows() != 1 || vv.cols() != va.cols())
      throw std::invalid_argument("add_rowvec: vector must be 1 x cols");
    Matrix out = va;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vv(0, j);
    return unary_binary(std::move(out), {a, v}, [this, a, v](const Matrix& g) {
      accumulate(a, g);
      if (needs_grad(v)) {
        Matrix& dv = grad_buffer(v);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) dv(0, j) += g(i, j);
      }
    });
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool grad_seen = false;
    std::function<void()> backprop;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  Node& node(Var v) {
    if (v.tape_ != this) throw std::logic_error("autodiff: variable does not belong to this tape");
    return nodes_[v.id_];
  }
  const Node& node(Var v) const {
    if (v.tape_ != this) throw std::logic_error("autodiff: variable does not belong to this tape");
    return nodes_[v.id_];
  }

  bool needs_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  void ensure_grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  }

  Matrix& grad_buffer(Var v) {
    ensure_grad(v.id_);
    nodes_[v.id_].grad_seen = true;
    return nodes_[v.id_].grad;
  }

  void accumulate(Var v, const Matrix& delta) {
    if (!needs_grad(v)) return;
    Matrix& g = grad_buffer(v);
    for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += delta.data()[k];
  }

  void accumulate_moved(Var v, Matrix delta) { accumulate(v, delta); }

  Var push(Matrix value, bool requires_grad, std::function<void()> backprop) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, std::move(backprop)});
    return Var(this, nodes_.size() - 1);
  }

  void check_same_shape(Var a, Var b, const char* op) {
    if (!value(a).same_shape(value(b)))
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  // Creates the result node; `fn` receives the output gradient.
  Var unary_binary(Matrix out, const std::vector<Var>& parents,
                   std::function<void(const Matrix&)> fn) {
    bool req = false;
    for (Var p : parents) {
      if (p.tape_ != this) throw std::logic_error("autodiff: variable does not belong to this tape");
      req = req || needs_grad(p);
    }
    Var r = push(std::move(out), req, {});
    if (req && fn) {
      node(r).backprop = [this, r, fn = std::move(fn)]() {
        if (nodes_[r.id()].grad_seen) fn(nodes_[r.id()].grad);
      };
    }
    return r;
  }
};

inline const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("autodiff: value of an unbound variable");
  return tape_->value(*this);
}

/// Symmetric matrix KL between two row-distribution matrices, built from
/// differentiable primitives; logs are clamped at the probability floor.
inline Var m_kl(Tape& t, Var a, Var b) {
  Var la = t.log_clamped(a);
  Var lb = t.log_clamped(b);
  Var fwd = t.mul(a, t.sub(la, lb));
  Var rev = t.mul(b, t.sub(lb, la));
  return t.sum(t.add(fwd, rev));
}

}  // namespace relalign::ad
