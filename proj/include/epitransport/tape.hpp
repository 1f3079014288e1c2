#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "epitransport/common.hpp"
#include "epitransport/odeint.hpp"

namespace epitransport::tape {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until Tape::clear().
class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Eigen::MatrixXd& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode autodiff tape. Ops append nodes holding the forward value and
/// a backward closure; backward() walks nodes in reverse creation order, which
/// is a valid topological order because ops only reference earlier nodes.
/// Gradient buffers are allocated lazily, so dead branches (e.g. solver error
/// estimates) cost nothing in the reverse pass.
class Tape {
 public:
  struct Node {
    Eigen::MatrixXd val;
    Eigen::MatrixXd grad;  // empty until touched by backward
    std::function<void(Tape&, const Eigen::MatrixXd&)> back;  // propagates the node's grad to parents
  };

  Value leaf(Eigen::MatrixXd v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr});
    return Value(this, static_cast<int>(nodes_.size()) - 1);
  }

  Value constant(Eigen::MatrixXd v) { return leaf(std::move(v)); }

  Value scalar_const(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return leaf(std::move(m));
  }

  Value make(Eigen::MatrixXd v, std::function<void(Tape&, const Eigen::MatrixXd&)> back) {
    nodes_.push_back(Node{std::move(v), {}, std::move(back)});
    return Value(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Eigen::MatrixXd& value(int id) const { return nodes_[static_cast<size_t>(id)].val; }

  /// Gradient of the last backward() root w.r.t. node v (zeros if untouched).
  Eigen::MatrixXd grad(Value v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id())];
    if (n.grad.size() == 0) return Eigen::MatrixXd::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  /// Accumulates g into the gradient buffer of node id.
  template <class Expr>
  void accum(int id, const Expr& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and runs the reverse sweep. root must be 1x1.
  void backward(Value root) {
    if (root.tape() != this) throw_shape("backward: value does not belong to this tape");
    Node& r = nodes_[static_cast<size_t>(root.id())];
    if (r.val.size() != 1) throw_shape("backward: root must be a scalar");
    r.grad = Eigen::MatrixXd::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.size() != 0 && n.back) n.back(*this, n.grad);
    }
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

inline const Eigen::MatrixXd& Value::value() const { return tape_->value(id_); }

inline double Value::scalar() const {
  if (value().size() != 1) throw_shape("scalar() on non-scalar value");
  return value()(0, 0);
}

namespace detail {
inline Tape& same_tape(Value a, Value b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw_shape("operands are not on the same tape");
  return *a.tape();
}
inline void require_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw_shape(std::string(op) + ": shape mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / structural ops
// ---------------------------------------------------------------------------

inline Value add(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  int ia = a.id(), ib = b.id();
  return t.make(a.value() + b.value(), [ia, ib](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g);
    tp.accum(ib, g);
  });
}

inline Value sub(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  int ia = a.id(), ib = b.id();
  return t.make(a.value() - b.value(), [ia, ib](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g);
    tp.accum(ib, -g);
  });
}

/// Hadamard product.
inline Value mul(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  int ia = a.id(), ib = b.id();
  return t.make(a.value().cwiseProduct(b.value()), [ia, ib](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g.cwiseProduct(tp.value(ib)));
    tp.accum(ib, g.cwiseProduct(tp.value(ia)));
  });
}

inline Value scale(Value a, double c) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.make(c * a.value(),
                [ia, c](Tape& tp, const Eigen::MatrixXd& g) { tp.accum(ia, c * g); });
}

inline Value neg(Value a) { return scale(a, -1.0); }

/// Product of a 1x1 tape scalar with a tensor.
inline Value scale_by(Value s, Value a) {
  Tape& t = detail::same_tape(s, a);
  if (s.value().size() != 1) throw_shape("scale_by: scale operand must be 1x1");
  int is = s.id(), ia = a.id();
  return t.make(s.scalar() * a.value(), [is, ia](Tape& tp, const Eigen::MatrixXd& g) {
    Eigen::MatrixXd sg(1, 1);
    sg(0, 0) = g.cwiseProduct(tp.value(ia)).sum();
    tp.accum(is, sg);
    tp.accum(ia, tp.value(is)(0, 0) * g);
  });
}

/// Elementwise product with a constant (no gradient to the constant).
inline Value mul_const(Value a, const Eigen::MatrixXd& c) {
  Tape& t = *a.tape();
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw_shape("mul_const: shape mismatch");
  int ia = a.id();
  Eigen::MatrixXd cc = c;
  return t.make(a.value().cwiseProduct(c), [ia, cc](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g.cwiseProduct(cc));
  });
}

inline Value add_const(Value a, const Eigen::MatrixXd& c) {
  Tape& t = *a.tape();
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw_shape("add_const: shape mismatch");
  int ia = a.id();
  return t.make(a.value() + c, [ia](Tape& tp, const Eigen::MatrixXd& g) { tp.accum(ia, g); });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

inline Value matmul(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.rows()) throw_shape("matmul: inner dimensions do not match");
  int ia = a.id(), ib = b.id();
  return t.make(a.value() * b.value(), [ia, ib](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g * tp.value(ib).transpose());
    tp.accum(ib, tp.value(ia).transpose() * g);
  });
}

/// A * x with a constant left matrix. A is captured by pointer: the caller
/// must keep it alive for the lifetime of the tape (graph operators and
/// mobility snapshots live in long-lived structures).
inline Value matmul_const_left(const Eigen::MatrixXd* A, Value x) {
  Tape& t = *x.tape();
  if (A->cols() != x.rows()) throw_shape("matmul_const_left: inner dimensions do not match");
  int ix = x.id();
  return t.make((*A) * x.value(), [A, ix](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ix, A->transpose() * g);
  });
}

// ---------------------------------------------------------------------------
// Broadcast ops
// ---------------------------------------------------------------------------

/// a (N x C) + row vector r (1 x C) broadcast over rows.
inline Value add_rowvec(Value a, Value r) {
  Tape& t = detail::same_tape(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw_shape("add_rowvec: expected 1 x cols(a)");
  int ia = a.id(), ir = r.id();
  Eigen::MatrixXd out = a.value();
  out.rowwise() += Eigen::RowVectorXd(r.value().row(0));
  return t.make(std::move(out), [ia, ir](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g);
    tp.accum(ir, Eigen::MatrixXd(g.colwise().sum()));
  });
}

/// a (N x C) .* column vector c (N x 1) broadcast over columns.
inline Value mul_colvec(Value a, Value c) {
  Tape& t = detail::same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw_shape("mul_colvec: expected rows(a) x 1");
  int ia = a.id(), ic = c.id();
  Eigen::MatrixXd out = a.value().array().colwise() * Eigen::ArrayXd(c.value().col(0));
  return t.make(std::move(out), [ia, ic](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, (g.array().colwise() * Eigen::ArrayXd(tp.value(ic).col(0))).matrix());
    tp.accum(ic, Eigen::MatrixXd(g.cwiseProduct(tp.value(ia)).rowwise().sum()));
  });
}

inline Value mul_colvec_const(Value a, const Eigen::VectorXd& c) {
  Tape& t = *a.tape();
  if (c.size() != a.rows()) throw_shape("mul_colvec_const: length mismatch");
  int ia = a.id();
  Eigen::VectorXd cc = c;
  return t.make((a.value().array().colwise() * cc.array()).matrix(),
                [ia, cc](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accum(ia, (g.array().colwise() * cc.array()).matrix());
                });
}

inline Value add_colvec_const(Value a, const Eigen::VectorXd& c) {
  Tape& t = *a.tape();
  if (c.size() != a.rows()) throw_shape("add_colvec_const: length mismatch");
  int ia = a.id();
  Eigen::MatrixXd out = a.value();
  out.colwise() += c;
  return t.make(std::move(out), [ia](Tape& tp, const Eigen::MatrixXd& g) { tp.accum(ia, g); });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Value sigmoid(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::MatrixXd out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Eigen::MatrixXd saved = out;
  return t.make(std::move(out), [ia, saved](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, (g.array() * saved.array() * (1.0 - saved.array())).matrix());
  });
}

inline Value tanh_op(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::MatrixXd out = a.value().array().tanh().matrix();
  Eigen::MatrixXd saved = out;
  return t.make(std::move(out), [ia, saved](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, (g.array() * (1.0 - saved.array().square())).matrix());
  });
}

/// Numerically stable softplus log(1 + e^x); derivative is sigmoid(x).
inline Value softplus(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::ArrayXXd x = a.value().array();
  Eigen::MatrixXd out = (x.max(0.0) + (-x.abs()).exp().log1p()).matrix();
  return t.make(std::move(out), [ia](Tape& tp, const Eigen::MatrixXd& g) {
    Eigen::ArrayXXd s = 1.0 / (1.0 + (-tp.value(ia).array()).exp());
    tp.accum(ia, (g.array() * s).matrix());
  });
}

inline Value exp_op(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::MatrixXd out = a.value().array().exp().matrix();
  Eigen::MatrixXd saved = out;
  return t.make(std::move(out), [ia, saved](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g.cwiseProduct(saved));
  });
}

/// max(0, x); subgradient 0 at the kink.
inline Value relu(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.make(a.value().cwiseMax(0.0), [ia](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, (g.array() * (tp.value(ia).array() > 0.0).cast<double>()).matrix());
  });
}

inline Value sqrt_op(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::MatrixXd out = a.value().array().sqrt().matrix();
  Eigen::MatrixXd saved = out;
  return t.make(std::move(out), [ia, saved](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, (g.array() * 0.5 / saved.array()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Shape ops and reductions
// ---------------------------------------------------------------------------

inline Value concat_cols(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  if (a.rows() != b.rows()) throw_shape("concat_cols: row count mismatch");
  int ia = a.id(), ib = b.id();
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  Eigen::Index ca = a.cols(), cb = b.cols();
  return t.make(std::move(out), [ia, ib, ca, cb](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, g.leftCols(ca));
    tp.accum(ib, g.rightCols(cb));
  });
}

/// Sum of all elements -> 1x1.
inline Value sum(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index r = a.rows(), c = a.cols();
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().sum();
  return t.make(std::move(out), [ia, r, c](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accum(ia, Eigen::MatrixXd::Constant(r, c, g(0, 0)));
  });
}

/// Sum over columns -> N x 1 (channel aggregation in the decoder).
inline Value sum_cols(Value a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index c = a.cols();
  return t.make(Eigen::MatrixXd(a.value().rowwise().sum()),
                [ia, c](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accum(ia, g.replicate(1, c));
                });
}

/// sum_i coef[i] * xs[i]; one node regardless of the number of terms.
inline Value linear_comb(std::span<const double> coef, std::span<const Value* const> xs) {
  if (coef.empty() || coef.size() != xs.size()) throw_shape("linear_comb: bad term list");
  Tape& t = *xs[0]->tape();
  Eigen::MatrixXd out = coef[0] * xs[0]->value();
  std::vector<int> ids(xs.size());
  ids[0] = xs[0]->id();
  for (size_t i = 1; i < xs.size(); ++i) {
    if (xs[i]->tape() != &t) throw_shape("linear_comb: operands on different tapes");
    out.noalias() += coef[i] * xs[i]->value();
    ids[i] = xs[i]->id();
  }
  std::vector<double> cs(coef.begin(), coef.end());
  return t.make(std::move(out), [ids, cs](Tape& tp, const Eigen::MatrixXd& g) {
    for (size_t i = 0; i < ids.size(); ++i) tp.accum(ids[i], cs[i] * g);
  });
}

/// z = mean + exp(0.5 * logvar) .* eps. Gradient flows to mean and logvar,
/// not to the (constant) noise draw.
inline Value reparameterize(Value mean, Value logvar, const Eigen::MatrixXd& eps) {
  detail::require_same_shape(mean, logvar, "reparameterize");
  if (mean.rows() != eps.rows() || mean.cols() != eps.cols())
    throw_shape("reparameterize: eps shape mismatch");
  Value std_dev = exp_op(scale(logvar, 0.5));
  return add(mean, mul_const(std_dev, eps));
}

}  // namespace epitransport::tape

// Integrator hooks for tape values: stage combinations become single nodes so
// the whole discrete solve is differentiated exactly (discretize-then-
// optimize). Step-control decisions read raw values and are not recorded.
namespace epitransport::odeint {

template <>
struct OdeAlgebra<tape::Value> {
  static tape::Value lincomb(std::span<const double> coef, std::span<const tape::Value* const> xs) {
    return tape::linear_comb(coef, xs);
  }
  static double error_ratio(const tape::Value& err, const tape::Value& y0, const tape::Value& y1,
                            double atol, double rtol) {
    return OdeAlgebra<Eigen::MatrixXd>::error_ratio(err.value(), y0.value(), y1.value(), atol, rtol);
  }
  static bool all_finite(const tape::Value& v) { return v.value().allFinite(); }
};

}  // namespace epitransport::odeint
