#include "tcca/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace tcca::ad {

namespace {

constexpr double kLogFloor = -27.631021115928547;  // ln(1e-12)

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw InvalidArgument("variable is not attached to a tape");
  return *a.tape;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch");
}

Matrix row_softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Matrix row_log_softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

int ParamStore::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw InvalidArgument("duplicate parameter name " + name);
  const int id = size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  masks_.emplace_back();
  return id;
}

void ParamStore::set_mask(int id, Matrix mask) {
  check_same_shape(value(id), mask, "set_mask");
  masks_[static_cast<std::size_t>(id)] = std::move(mask);
}

std::optional<int> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Gradients ParamStore::zeros() const {
  Gradients g;
  g.reserve(values_.size());
  for (const auto& v : values_) g.push_back(Matrix::Zero(v.rows(), v.cols()));
  return g;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

// ----------------------------------------------------------------------- Var

const Matrix& Var::value() const { return tape_of(*this).value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw InvalidArgument("scalar() on a non-scalar node");
  return v(0, 0);
}

// ---------------------------------------------------------------------- Tape

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, -1, false, false});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(int id) {
  if (params_ == nullptr) throw InvalidArgument("tape has no parameter store");
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return {this, it->second};
  nodes_.push_back(Node{params_->value(id), {}, {}, id, true, false});
  const int nid = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(id, nid);
  return {this, nid};
}

Var Tape::node(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return node(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::node(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (Var v : inputs) {
    if (v.tape != this) throw InvalidArgument("mixing variables from different tapes");
    needs = needs || nodes_[static_cast<std::size_t>(v.id)].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, -1, needs, false});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_ref(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) throw InvalidArgument("backward root must be a scalar");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  grad_ref(root)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.backward) continue;
    // The closure may push into earlier nodes; this node's grad is not
    // resized meanwhile, so a reference stays valid.
    n.backward(*this, n.grad);
  }
}

void Tape::accumulate_param_grads(Gradients& out, double scale) const {
  for (const auto& [pid, nid] : param_nodes_) {
    const Node& n = nodes_[static_cast<std::size_t>(nid)];
    if (!n.has_grad) continue;
    Matrix& dst = out[static_cast<std::size_t>(pid)];
    if (const auto& m = params_->mask(pid))
      dst.array() += scale * n.grad.array() * m->array();
    else
      dst += scale * n.grad;
  }
}

Var Tape::detach(Var x) {
  if (detach_source_ != nullptr) {
    if (detach_cursor_ >= detach_source_->size()) throw InvalidArgument("detach replay ran past the recording");
    const Matrix& frozen = (*detach_source_)[detach_cursor_++];
    check_same_shape(frozen, x.value(), "detach replay");
    return constant(frozen);
  }
  if (detach_sink_ != nullptr) detach_sink_->push_back(x.value());
  return constant(x.value());
}

// ------------------------------------------------------------ linear algebra

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimension mismatch");
  return tape_of(a).node(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad_ref(a).noalias() += g * b.value().transpose();
    if (t.needs_grad(b)) t.grad_ref(b).noalias() += a.value().transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: inner dimension mismatch");
  return tape_of(a).node(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad_ref(a).noalias() += g * b.value();
    if (t.needs_grad(b)) t.grad_ref(b).noalias() += g.transpose() * a.value();
  });
}

Var transpose(Var a) {
  return tape_of(a).node(a.value().transpose(), {a},
                         [a](Tape& t, const Matrix& g) { t.grad_ref(a) += g.transpose(); });
}

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  return tape_of(a).node(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad_ref(a) += g;
    if (t.needs_grad(b)) t.grad_ref(b) += g;
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  return tape_of(a).node(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad_ref(a) += g;
    if (t.needs_grad(b)) t.grad_ref(b) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  return tape_of(a).node(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad_ref(a) += g.cwiseProduct(b.value());
    if (t.needs_grad(b)) t.grad_ref(b) += g.cwiseProduct(a.value());
  });
}

Var scale(Var a, double s) {
  return tape_of(a).node(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.grad_ref(a) += s * g; });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw InvalidArgument("add_row: bias shape mismatch");
  Matrix y = x.value();
  y.rowwise() += row.value().row(0);
  return tape_of(x).node(std::move(y), {x, row}, [x, row](Tape& t, const Matrix& g) {
    if (t.needs_grad(x)) t.grad_ref(x) += g;
    if (t.needs_grad(row)) t.grad_ref(row) += g.colwise().sum();
  });
}

Var add_const(Var x, const Matrix& c) {
  check_same_shape(x.value(), c, "add_const");
  return tape_of(x).node(x.value() + c, {x}, [x](Tape& t, const Matrix& g) { t.grad_ref(x) += g; });
}

// ----------------------------------------------------------- nonlinearities

Var gelu(Var x) {
  const Matrix& v = x.value();
  Matrix y = v.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)); });
  return tape_of(x).node(std::move(y), {x}, [x](Tape& t, const Matrix& g) {
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    Matrix d = x.value().unaryExpr([inv_sqrt_2pi](double z) {
      return 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)) + z * inv_sqrt_2pi * std::exp(-0.5 * z * z);
    });
    t.grad_ref(x) += g.cwiseProduct(d);
  });
}

Var softmax_rows(Var x) {
  Matrix y = row_softmax(x.value());
  return tape_of(x).node(y, {x}, [x, y](Tape& t, const Matrix& g) {
    Vector dots = g.cwiseProduct(y).rowwise().sum();
    t.grad_ref(x) += y.cwiseProduct(g - dots.replicate(1, g.cols()));
  });
}

Var log_softmax_rows(Var x) {
  Matrix y = row_log_softmax(x.value());
  return tape_of(x).node(y, {x}, [x, y](Tape& t, const Matrix& g) {
    Matrix s = y.array().exp();
    Vector gs = g.rowwise().sum();
    t.grad_ref(x) += g - s.cwiseProduct(gs.replicate(1, g.cols()));
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& v = x.value();
  const Eigen::Index n = v.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
    throw InvalidArgument("layer_norm: parameter shape mismatch");
  Matrix xhat(v.rows(), n);
  Vector inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  return tape_of(x).node(std::move(y), {x, gain, bias},
                         [x, gain, bias, xhat, inv_std](Tape& t, const Matrix& g) {
    if (t.needs_grad(gain)) t.grad_ref(gain) += g.cwiseProduct(xhat).colwise().sum();
    if (t.needs_grad(bias)) t.grad_ref(bias) += g.colwise().sum();
    if (t.needs_grad(x)) {
      Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
      Matrix& dx = t.grad_ref(x);
      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw InvalidArgument("dropout rate must be below 1");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = rng.uniform() < rate ? 0.0 : keep;
  return tape_of(x).node(x.value().cwiseProduct(mask), {x},
                         [x, mask](Tape& t, const Matrix& g) { t.grad_ref(x) += g.cwiseProduct(mask); });
}

// -------------------------------------------------------------------- shape

Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw InvalidArgument("slice_rows out of range");
  return tape_of(x).node(x.value().middleRows(begin, count), {x}, [x, begin, count](Tape& t, const Matrix& g) {
    t.grad_ref(x).middleRows(begin, count) += g;
  });
}

Var slice_cols(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) throw InvalidArgument("slice_cols out of range");
  return tape_of(x).node(x.value().middleCols(begin, count), {x}, [x, begin, count](Tape& t, const Matrix& g) {
    t.grad_ref(x).middleCols(begin, count) += g;
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (Var p : parts) {
    if (p.cols() != cols) throw InvalidArgument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).node(std::move(y), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index pos = 0;
    for (Var p : inputs) {
      if (t.needs_grad(p)) t.grad_ref(p) += g.middleRows(pos, p.rows());
      pos += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (Var p : parts) {
    if (p.rows() != rows) throw InvalidArgument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).node(std::move(y), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index pos = 0;
    for (Var p : inputs) {
      if (t.needs_grad(p)) t.grad_ref(p) += g.middleCols(pos, p.cols());
      pos += p.cols();
    }
  });
}

Var gather_rows(Var x, std::span<const int> index) {
  Matrix y(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows()) throw InvalidArgument("gather_rows index out of range");
    y.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return tape_of(x).node(std::move(y), {x}, [x, idx](Tape& t, const Matrix& g) {
    Matrix& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

// --------------------------------------------------------------- reductions

Var sum(Var x) {
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return tape_of(x).node(std::move(y), {x}, [x](Tape& t, const Matrix& g) { t.grad_ref(x).array() += g(0, 0); });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  Matrix y(1, 1);
  y(0, 0) = x.value().sum() / n;
  return tape_of(x).node(std::move(y), {x},
                         [x, n](Tape& t, const Matrix& g) { t.grad_ref(x).array() += g(0, 0) / n; });
}

Var add_scalars(std::span<const Var> terms) {
  if (terms.empty()) throw InvalidArgument("add_scalars of nothing");
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

// ------------------------------------------------------------------- losses

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) throw InvalidArgument("cross_entropy: target count mismatch");
  for (int k : targets)
    if (k < 0 || k >= z.cols()) throw InvalidArgument("cross_entropy: label out of range");
  Matrix logp = row_log_softmax(z);
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) loss -= logp(r, targets[static_cast<std::size_t>(r)]);
  Matrix y(1, 1);
  y(0, 0) = loss / n;
  std::vector<int> tgt(targets.begin(), targets.end());
  return tape_of(logits).node(std::move(y), {logits}, [logits, logp, tgt, n](Tape& t, const Matrix& g) {
    Matrix d = logp.array().exp();
    for (std::size_t r = 0; r < tgt.size(); ++r) d(static_cast<Eigen::Index>(r), tgt[r]) -= 1.0;
    t.grad_ref(logits) += (g(0, 0) / n) * d;
  });
}

Var kl_rows_sum(Var p_logits, Var q_logits) {
  check_same_shape(p_logits.value(), q_logits.value(), "kl_rows_sum");
  const Matrix logp = row_log_softmax(p_logits.value());
  const Matrix logq = row_log_softmax(q_logits.value());
  const Matrix p = logp.array().exp();
  const Matrix lp = logp.cwiseMax(kLogFloor);
  const Matrix lq = logq.cwiseMax(kLogFloor);
  Matrix y(1, 1);
  y(0, 0) = (p.array() * (lp - lq).array()).sum();
  return tape_of(p_logits).node(std::move(y), {p_logits}, [p_logits, p, logp, lq](Tape& t, const Matrix& g) {
    // d/dp_j of p_j*max(ln p_j, floor) is ln p_j + 1 above the floor, floor below.
    Matrix dp = logp.unaryExpr([](double l) { return l > kLogFloor ? l + 1.0 : kLogFloor; }) - lq;
    Vector dots = p.cwiseProduct(dp).rowwise().sum();
    t.grad_ref(p_logits) += g(0, 0) * p.cwiseProduct(dp - dots.replicate(1, dp.cols()));
  });
}

Var clamped_square_mean(Var diff, double tau) {
  const Matrix& d = diff.value();
  const double n = static_cast<double>(d.size());
  Matrix y(1, 1);
  y(0, 0) = d.cwiseAbs().cwiseMin(tau).array().square().sum() / n;
  return tape_of(diff).node(std::move(y), {diff}, [diff, tau, n](Tape& t, const Matrix& g) {
    Matrix dd = diff.value().unaryExpr([tau](double v) { return std::abs(v) < tau ? 2.0 * v : 0.0; });
    t.grad_ref(diff) += (g(0, 0) / n) * dd;
  });
}

Var mse(Var pred, const Matrix& target) {
  check_same_shape(pred.value(), target, "mse");
  const double n = static_cast<double>(target.size());
  Matrix y(1, 1);
  y(0, 0) = (pred.value() - target).array().square().sum() / n;
  return tape_of(pred).node(std::move(y), {pred}, [pred, target, n](Tape& t, const Matrix& g) {
    t.grad_ref(pred) += (2.0 * g(0, 0) / n) * (pred.value() - target);
  });
}

}  // namespace tcca::ad
