#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation of one forward pass in creation order,
// which is already a topological order, so backward() is a single reverse
// sweep. Tapes are single-threaded; build one per forward pass.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pms/numerics/tensor.hpp"

namespace pms::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Shape& dims() const { return value().dims(); }
  std::size_t rows() const { return value().dim(0); }
  std::size_t cols() const { return value().dims().back(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input node. Parameters pass requires_grad = true, data passes false.
  Var leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var parameter(Tensor value) { return leaf(std::move(value), true); }

  /// Records an op result. The node requires grad iff any parent does;
  /// otherwise the backward closure is dropped.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  std::span<double> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  /// Read-only view of the incoming gradient during a backward sweep.
  std::span<const double> incoming(std::size_t id) { return grad_buffer(id); }

  /// Reverse sweep from a scalar loss. Gradients from earlier calls are
  /// discarded first.
  void backward(Var loss) {
    if (loss.tape() != this) throw Error("backward: loss belongs to a different tape");
    if (loss.value().size() != 1) {
      throw DimensionError("backward: loss must be scalar, got " + shape_string(loss.value().dims()));
    }
    for (Node& n : nodes_) n.grad.clear();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  /// Gradient of the last backward() wrt a node; zeros when disconnected.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor::zeros(n.value.dims());
    return Tensor::unchecked(n.value.dims(), n.grad);
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    bool requires_grad = false;
  };

  // deque keeps value references stable while new nodes are appended.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap as_matrix(const Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.rank() == 1 ? 1 : t.dim(0));
  const auto cols = static_cast<Eigen::Index>(t.size() / static_cast<std::size_t>(rows));
  return ConstMap(t.data(), rows, cols);
}

inline ConstMap as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return ConstMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MutMap as_matrix(std::span<double> s, std::size_t rows, std::size_t cols) {
  return MutMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.dims()));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  detail::require_same_tape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  x.require_same_shape(y, "add");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return a.tape()->record(Tensor::unchecked(x.dims(), std::move(out)), {a, b},
                          [a, b](Tape& t, std::size_t self) {
                            auto g = t.incoming(self);
                            for (Var p : {a, b}) {
                              if (!t.requires_grad(p.id())) continue;
                              auto gp = t.grad_buffer(p.id());
                              for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
                            }
                          });
}

/// Weighted sum Σ coeffs[i] · terms[i] as a single node.
inline Var lincomb(const std::vector<Var>& terms, const std::vector<double>& coeffs) {
  if (terms.empty() || terms.size() != coeffs.size()) {
    throw DimensionError("lincomb: " + std::to_string(terms.size()) + " terms vs " +
                         std::to_string(coeffs.size()) + " coefficients");
  }
  const Tensor& first = terms.front().value();
  std::vector<double> out(first.size(), 0.0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    detail::require_same_tape(terms[0], terms[k], "lincomb");
    const Tensor& x = terms[k].value();
    first.require_same_shape(x, "lincomb");
    const double c = coeffs[k];
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * x[i];
  }
  return terms[0].tape()->record(Tensor::unchecked(first.dims(), std::move(out)), terms,
                                 [terms, coeffs](Tape& t, std::size_t self) {
                                   auto g = t.incoming(self);
                                   for (std::size_t k = 0; k < terms.size(); ++k) {
                                     if (!t.requires_grad(terms[k].id()) || coeffs[k] == 0.0) continue;
                                     auto gp = t.grad_buffer(terms[k].id());
                                     for (std::size_t i = 0; i < g.size(); ++i) gp[i] += coeffs[k] * g[i];
                                   }
                                 });
}

inline Var sub(Var a, Var b) { return lincomb({a, b}, {1.0, -1.0}); }
inline Var scale(Var a, double c) { return lincomb({a}, {c}); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }

/// Elementwise product of two nodes.
inline Var mul(Var a, Var b) {
  detail::require_same_tape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  x.require_same_shape(y, "mul");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return a.tape()->record(Tensor::unchecked(x.dims(), std::move(out)), {a, b},
                          [a, b](Tape& t, std::size_t self) {
                            auto g = t.incoming(self);
                            const Tensor& xv = t.value(a.id());
                            const Tensor& yv = t.value(b.id());
                            if (t.requires_grad(a.id())) {
                              auto ga = t.grad_buffer(a.id());
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
                            }
                            if (t.requires_grad(b.id())) {
                              auto gb = t.grad_buffer(b.id());
                              for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
                            }
                          });
}

/// Elementwise product with a constant tensor (masks, per-frame weights).
inline Var mul_const(Var a, const Tensor& c) {
  const Tensor& x = a.value();
  x.require_same_shape(c, "mul_const");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c[i];
  return a.tape()->record(Tensor::unchecked(x.dims(), std::move(out)), {a}, [a, c](Tape& t, std::size_t self) {
    auto g = t.incoming(self);
    auto ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, tanh, sigmoid };

inline Var activate(Var a, Activation kind) {
  if (kind == Activation::identity) return a;
  const Tensor& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Activation::relu: out[i] = x[i] > 0.0 ? x[i] : 0.0; break;
      case Activation::tanh: out[i] = std::tanh(x[i]); break;
      case Activation::sigmoid: out[i] = detail::sigmoid(x[i]); break;
      case Activation::identity: out[i] = x[i]; break;
    }
  }
  return a.tape()->record(Tensor::unchecked(x.dims(), std::move(out)), {a}, [a, kind](Tape& t, std::size_t self) {
    auto g = t.incoming(self);
    const Tensor& y = t.value(self);
    const Tensor& xv = t.value(a.id());
    auto ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 1.0;
      switch (kind) {
        case Activation::relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::tanh: d = 1.0 - y[i] * y[i]; break;
        case Activation::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case Activation::identity: break;
      }
      ga[i] += g[i] * d;
    }
  });
}

inline Var relu(Var a) { return activate(a, Activation::relu); }
inline Var tanh(Var a) { return activate(a, Activation::tanh); }
inline Var sigmoid(Var a) { return activate(a, Activation::sigmoid); }

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

/// y = x·w (+ b broadcast over rows). `b` may be an invalid Var for no bias.
inline Var linear(Var x, Var w, Var b = {}) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  detail::require_matrix(xv, "linear");
  detail::require_matrix(wv, "linear");
  if (xv.dim(1) != wv.dim(0)) {
    throw DimensionError("linear: input " + shape_string(xv.dims()) + " does not conform to weight " +
                         shape_string(wv.dims()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = wv.dim(1);
  if (b.valid()) {
    const Tensor& bv = b.value();
    if (bv.size() != cols) {
      throw DimensionError("linear: bias " + shape_string(bv.dims()) + " does not match weight " +
                           shape_string(wv.dims()));
    }
  }
  std::vector<double> out(rows * cols);
  auto y = detail::as_matrix(std::span<double>(out), rows, cols);
  y.noalias() = detail::as_matrix(xv) * detail::as_matrix(wv);
  if (b.valid()) {
    const Tensor& bv = b.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  std::vector<Var> parents{x, w};
  if (b.valid()) parents.push_back(b);
  return x.tape()->record(
      Tensor::unchecked({rows, cols}, std::move(out)), parents, [x, w, b, rows, cols](Tape& t, std::size_t self) {
        auto g = detail::as_matrix(t.incoming(self), rows, cols);
        const Tensor& xv = t.value(x.id());
        const Tensor& wv = t.value(w.id());
        const std::size_t inner = wv.dim(0);
        if (t.requires_grad(x.id())) {
          detail::as_matrix(t.grad_buffer(x.id()), rows, inner).noalias() += g * detail::as_matrix(wv).transpose();
        }
        if (t.requires_grad(w.id())) {
          detail::as_matrix(t.grad_buffer(w.id()), inner, cols).noalias() += detail::as_matrix(xv).transpose() * g;
        }
        if (b.valid() && t.requires_grad(b.id())) {
          auto gb = t.grad_buffer(b.id());
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g.col(static_cast<Eigen::Index>(c)).sum();
        }
      });
}

/// Stacks matrices with equal column counts vertically.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    detail::require_matrix(p.value(), "concat_rows");
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch " + shape_string(p.dims()));
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Var& p : parts) out.insert(out.end(), p.value().storage().begin(), p.value().storage().end());
  return parts.front().tape()->record(Tensor::unchecked({rows, cols}, std::move(out)), parts,
                                      [parts](Tape& t, std::size_t self) {
                                        auto g = t.incoming(self);
                                        std::size_t offset = 0;
                                        for (const Var& p : parts) {
                                          const std::size_t n = t.value(p.id()).size();
                                          if (t.requires_grad(p.id())) {
                                            auto gp = t.grad_buffer(p.id());
                                            for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
                                          }
                                          offset += n;
                                        }
                                      });
}

/// Rows [begin, begin + count) of a matrix.
inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                         shape_string(x.dims()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.storage().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          x.storage().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return a.tape()->record(Tensor::unchecked({count, cols}, std::move(out)), {a},
                          [a, begin, cols](Tape& t, std::size_t self) {
                            auto g = t.incoming(self);
                            auto ga = t.grad_buffer(a.id());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
                          });
}

/// Per-column affine map y[r, c] = x[r, c] · scale[c] + shift[c].
inline Var column_affine(Var x, Var scale_v, Var shift_v) {
  const Tensor& xv = x.value();
  detail::require_matrix(xv, "column_affine");
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  if (scale_v.value().size() != cols || shift_v.value().size() != cols) {
    throw DimensionError("column_affine: scale/shift do not match " + shape_string(xv.dims()));
  }
  const Tensor& s = scale_v.value();
  const Tensor& h = shift_v.value();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * s[c] + h[c];
  return x.tape()->record(Tensor::unchecked(xv.dims(), std::move(out)), {x, scale_v, shift_v},
                          [x, scale_v, shift_v, rows, cols](Tape& t, std::size_t self) {
                            auto g = t.incoming(self);
                            const Tensor& xv = t.value(x.id());
                            const Tensor& s = t.value(scale_v.id());
                            if (t.requires_grad(x.id())) {
                              auto gx = t.grad_buffer(x.id());
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * s[c];
                            }
                            if (t.requires_grad(scale_v.id())) {
                              auto gs = t.grad_buffer(scale_v.id());
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) gs[c] += g[r * cols + c] * xv[r * cols + c];
                            }
                            if (t.requires_grad(shift_v.id())) {
                              auto gh = t.grad_buffer(shift_v.id());
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) gh[c] += g[r * cols + c];
                            }
                          });
}

/// Per-column standardization with batch statistics (biased variance).
/// Returns the standardized values; batch mean/variance are written to the
/// optional out-parameters for running-statistics bookkeeping.
inline Var batch_standardize(Var x, double eps, std::vector<double>* mean_out = nullptr,
                             std::vector<double>* var_out = nullptr) {
  const Tensor& xv = x.value();
  detail::require_matrix(xv, "batch_standardize");
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  std::vector<double> mean(cols, 0.0), var(cols, 0.0), inv(cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += xv[r * cols + c];
  for (double& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv[r * cols + c] - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < cols; ++c) {
    var[c] /= static_cast<double>(rows);
    inv[c] = 1.0 / std::sqrt(var[c] + eps);
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (xv[r * cols + c] - mean[c]) * inv[c];
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;
  return x.tape()->record(Tensor::unchecked(xv.dims(), std::move(out)), {x},
                          [x, inv, rows, cols](Tape& t, std::size_t self) {
                            auto g = t.incoming(self);
                            const Tensor& xhat = t.value(self);
                            auto gx = t.grad_buffer(x.id());
                            const double n = static_cast<double>(rows);
                            for (std::size_t c = 0; c < cols; ++c) {
                              double sum_g = 0.0, sum_gx = 0.0;
                              for (std::size_t r = 0; r < rows; ++r) {
                                sum_g += g[r * cols + c];
                                sum_gx += g[r * cols + c] * xhat[r * cols + c];
                              }
                              for (std::size_t r = 0; r < rows; ++r) {
                                const std::size_t i = r * cols + c;
                                gx[i] += inv[c] / n * (n * g[i] - sum_g - xhat[i] * sum_gx);
                              }
                            }
                          });
}

// ---------------------------------------------------------------------------
// LSTM cell pieces. Gate columns are laid out [input | forget | candidate | output].
// ---------------------------------------------------------------------------

/// Pre-activation gates z = [x | h]·w + b with w of shape (in + hidden, 4·hidden).
inline Var lstm_gates(Var x, Var h, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  const Tensor& wv = w.value();
  detail::require_matrix(xv, "lstm_gates");
  detail::require_matrix(hv, "lstm_gates");
  const std::size_t rows = xv.dim(0);
  const std::size_t in = xv.dim(1);
  const std::size_t hidden = hv.dim(1);
  if (hv.dim(0) != rows || wv.rank() != 2 || wv.dim(0) != in + hidden || wv.dim(1) != 4 * hidden ||
      b.value().size() != 4 * hidden) {
    throw DimensionError("lstm_gates: x " + shape_string(xv.dims()) + ", h " + shape_string(hv.dims()) + ", w " +
                         shape_string(wv.dims()) + ", b " + shape_string(b.value().dims()));
  }
  const std::size_t cols = 4 * hidden;
  const auto wm = detail::as_matrix(wv);
  std::vector<double> out(rows * cols);
  auto z = detail::as_matrix(std::span<double>(out), rows, cols);
  z.noalias() = detail::as_matrix(xv) * wm.topRows(static_cast<Eigen::Index>(in));
  z.noalias() += detail::as_matrix(hv) * wm.bottomRows(static_cast<Eigen::Index>(hidden));
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return x.tape()->record(
      Tensor::unchecked({rows, cols}, std::move(out)), {x, h, w, b},
      [x, h, w, b, rows, in, hidden, cols](Tape& t, std::size_t self) {
        auto g = detail::as_matrix(t.incoming(self), rows, cols);
        const auto wm = detail::as_matrix(t.value(w.id()));
        const auto top = static_cast<Eigen::Index>(in);
        const auto bottom = static_cast<Eigen::Index>(hidden);
        if (t.requires_grad(x.id()))
          detail::as_matrix(t.grad_buffer(x.id()), rows, in).noalias() += g * wm.topRows(top).transpose();
        if (t.requires_grad(h.id()))
          detail::as_matrix(t.grad_buffer(h.id()), rows, hidden).noalias() += g * wm.bottomRows(bottom).transpose();
        if (t.requires_grad(w.id())) {
          auto gw = detail::as_matrix(t.grad_buffer(w.id()), in + hidden, cols);
          gw.topRows(top).noalias() += detail::as_matrix(t.value(x.id())).transpose() * g;
          gw.bottomRows(bottom).noalias() += detail::as_matrix(t.value(h.id())).transpose() * g;
        }
        if (t.requires_grad(b.id())) {
          auto gb = t.grad_buffer(b.id());
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g.col(static_cast<Eigen::Index>(c)).sum();
        }
      });
}

/// c' = σ(f)·c + σ(i)·tanh(g) from pre-activation gates.
inline Var lstm_cell_state(Var gates, Var c_prev) {
  const Tensor& z = gates.value();
  const Tensor& c = c_prev.value();
  const std::size_t rows = c.dim(0);
  const std::size_t hidden = c.dim(1);
  if (z.rank() != 2 || z.dim(0) != rows || z.dim(1) != 4 * hidden) {
    throw DimensionError("lstm_cell_state: gates " + shape_string(z.dims()) + " vs state " + shape_string(c.dims()));
  }
  std::vector<double> out(rows * hidden);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * 4 * hidden;
    for (std::size_t k = 0; k < hidden; ++k) {
      const double i = detail::sigmoid(zr[k]);
      const double f = detail::sigmoid(zr[hidden + k]);
      const double gg = std::tanh(zr[2 * hidden + k]);
      out[r * hidden + k] = f * c[r * hidden + k] + i * gg;
    }
  }
  return gates.tape()->record(
      Tensor::unchecked(c.dims(), std::move(out)), {gates, c_prev},
      [gates, c_prev, rows, hidden](Tape& t, std::size_t self) {
        auto g = t.incoming(self);
        const Tensor& z = t.value(gates.id());
        const Tensor& c = t.value(c_prev.id());
        const bool want_z = t.requires_grad(gates.id());
        const bool want_c = t.requires_grad(c_prev.id());
        std::span<double> gz = want_z ? t.grad_buffer(gates.id()) : std::span<double>{};
        std::span<double> gc = want_c ? t.grad_buffer(c_prev.id()) : std::span<double>{};
        for (std::size_t r = 0; r < rows; ++r) {
          const double* zr = z.data() + r * 4 * hidden;
          for (std::size_t k = 0; k < hidden; ++k) {
            const double i = detail::sigmoid(zr[k]);
            const double f = detail::sigmoid(zr[hidden + k]);
            const double gg = std::tanh(zr[2 * hidden + k]);
            const double go = g[r * hidden + k];
            if (want_c) gc[r * hidden + k] += go * f;
            if (want_z) {
              double* gzr = gz.data() + r * 4 * hidden;
              gzr[k] += go * gg * i * (1.0 - i);
              gzr[hidden + k] += go * c[r * hidden + k] * f * (1.0 - f);
              gzr[2 * hidden + k] += go * i * (1.0 - gg * gg);
            }
          }
        }
      });
}

/// h' = σ(o)·tanh(c').
inline Var lstm_hidden(Var gates, Var cell) {
  const Tensor& z = gates.value();
  const Tensor& c = cell.value();
  const std::size_t rows = c.dim(0);
  const std::size_t hidden = c.dim(1);
  if (z.rank() != 2 || z.dim(0) != rows || z.dim(1) != 4 * hidden) {
    throw DimensionError("lstm_hidden: gates " + shape_string(z.dims()) + " vs state " + shape_string(c.dims()));
  }
  std::vector<double> out(rows * hidden);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < hidden; ++k)
      out[r * hidden + k] = detail::sigmoid(z[r * 4 * hidden + 3 * hidden + k]) * std::tanh(c[r * hidden + k]);
  return gates.tape()->record(
      Tensor::unchecked(c.dims(), std::move(out)), {gates, cell}, [gates, cell, rows, hidden](Tape& t, std::size_t self) {
        auto g = t.incoming(self);
        const Tensor& z = t.value(gates.id());
        const Tensor& c = t.value(cell.id());
        const bool want_z = t.requires_grad(gates.id());
        const bool want_c = t.requires_grad(cell.id());
        std::span<double> gz = want_z ? t.grad_buffer(gates.id()) : std::span<double>{};
        std::span<double> gc = want_c ? t.grad_buffer(cell.id()) : std::span<double>{};
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < hidden; ++k) {
            const double o = detail::sigmoid(z[r * 4 * hidden + 3 * hidden + k]);
            const double tc = std::tanh(c[r * hidden + k]);
            const double go = g[r * hidden + k];
            if (want_z) gz[r * 4 * hidden + 3 * hidden + k] += go * tc * o * (1.0 - o);
            if (want_c) gc[r * hidden + k] += go * o * (1.0 - tc * tc);
          }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  return a.tape()->record(Tensor::unchecked({1}, {s}), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.incoming(self)[0];
    for (double& v : t.grad_buffer(a.id())) v += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Mean absolute difference over rows whose weight is nonzero:
/// Σ_r w_r Σ_c |a - b| / (cols · Σ_r w_r). The subgradient of |·| at 0 is 0.
inline Var weighted_mean_abs_diff(Var a, Var b, const std::vector<double>& row_weights) {
  detail::require_same_tape(a, b, "mean_abs_diff");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  x.require_same_shape(y, "mean_abs_diff");
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t cols = x.size() / rows;
  if (row_weights.size() != rows) throw DimensionError("mean_abs_diff: row weight count mismatch");
  double total_w = 0.0;
  for (double w : row_weights) total_w += w;
  if (total_w <= 0.0) throw DimensionError("mean_abs_diff: no rows selected");
  const double norm = 1.0 / (total_w * static_cast<double>(cols));
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_weights[r] == 0.0) continue;
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) row += std::abs(x[r * cols + c] - y[r * cols + c]);
    s += row_weights[r] * row;
  }
  return a.tape()->record(Tensor::unchecked({1}, {s * norm}), {a, b},
                          [a, b, row_weights, rows, cols, norm](Tape& t, std::size_t self) {
                            const double g = t.incoming(self)[0] * norm;
                            const Tensor& x = t.value(a.id());
                            const Tensor& y = t.value(b.id());
                            const bool want_a = t.requires_grad(a.id());
                            const bool want_b = t.requires_grad(b.id());
                            std::span<double> ga = want_a ? t.grad_buffer(a.id()) : std::span<double>{};
                            std::span<double> gb = want_b ? t.grad_buffer(b.id()) : std::span<double>{};
                            for (std::size_t r = 0; r < rows; ++r) {
                              if (row_weights[r] == 0.0) continue;
                              for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                const double d = x[i] - y[i];
                                const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                                if (want_a) ga[i] += g * row_weights[r] * sgn;
                                if (want_b) gb[i] -= g * row_weights[r] * sgn;
                              }
                            }
                          });
}

inline Var mean_abs_diff(Var a, Var b) {
  const std::size_t rows = a.value().rank() == 1 ? 1 : a.value().dim(0);
  return weighted_mean_abs_diff(a, b, std::vector<double>(rows, 1.0));
}

}  // namespace pms::ad
