#pragma once

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate value together with a closure that
// pushes the node's gradient to its inputs. Parameters live in a
// ParamStore outside the tape, so a tape can be built per sample and
// thrown away; gradients are harvested into a Gradients buffer aligned
// with the store.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcca/core.hpp"
#include "tcca/rng.hpp"

namespace tcca::ad {

using Gradients = std::vector<Matrix>;

class ParamStore {
 public:
  int add(std::string name, Matrix init);
  // Entries where mask == 0 are frozen: they receive no gradient and are
  // never touched by the optimizer.
  void set_mask(int id, Matrix mask);

  int size() const { return static_cast<int>(values_.size()); }
  Matrix& value(int id) { return values_[static_cast<std::size_t>(id)]; }
  const Matrix& value(int id) const { return values_[static_cast<std::size_t>(id)]; }
  const std::string& name(int id) const { return names_[static_cast<std::size_t>(id)]; }
  const std::optional<Matrix>& mask(int id) const { return masks_[static_cast<std::size_t>(id)]; }
  std::optional<int> find(std::string_view name) const;

  Gradients zeros() const;
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<std::optional<Matrix>> masks_;
  std::unordered_map<std::string, int> index_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(const ParamStore* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(int id);
  // Creates an interior node. `backward` receives the node's gradient and
  // must accumulate into its inputs through grad_ref().
  Var node(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var node(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Matrix& grad_ref(Var v);
  // Gradient of the last backward() root with respect to v (zero if unreached).
  Matrix grad(Var v) const;

  void backward(Var root);
  void accumulate_param_grads(Gradients& out, double scale = 1.0) const;

  // Stop-gradient nodes can be recorded on one pass and replayed on later
  // passes; finite differences taken under replay differentiate exactly the
  // function whose gradient backward() computes.
  void record_detached(std::vector<Matrix>* sink) { detach_sink_ = sink; }
  void replay_detached(const std::vector<Matrix>* source) { detach_source_ = source; }
  Var detach(Var x);

  const ParamStore* params() const { return params_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    int param = -1;
    bool needs_grad = false;
    bool has_grad = false;
  };

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
  std::vector<Matrix>* detach_sink_ = nullptr;
  const std::vector<Matrix>* detach_source_ = nullptr;
  std::size_t detach_cursor_ = 0;
};

// Linear algebra
Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var x, Var row);  // x + broadcast of a 1 x n row
Var add_const(Var x, const Matrix& c);

// Pointwise and row-wise nonlinearities
Var gelu(Var x);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var dropout(Var x, double rate, Rng& rng);

// Shape manipulation
Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var x, Eigen::Index begin, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var x, std::span<const int> index);

// Reductions
Var sum(Var x);
Var mean(Var x);
Var add_scalars(std::span<const Var> terms);

// Losses. All return 1 x 1 nodes.
// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy_rows(Var logits, std::span<const int> targets);
// Sum over rows of KL(softmax(p_logits) || softmax(q_logits)), with both
// probabilities floored at 1e-12 inside the log. q_logits receives no
// gradient; pass it through Tape::detach so checks can freeze it.
Var kl_rows_sum(Var p_logits, Var q_logits);
// Mean over entries of min(|d|, tau)^2.
Var clamped_square_mean(Var diff, double tau);
// Mean over entries of (pred - target)^2.
Var mse(Var pred, const Matrix& target);

}  // namespace tcca::ad
