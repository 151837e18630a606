#include "tcca/nn.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace tcca::nn {

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (in + out));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-bound, bound);
  Linear l;
  l.weight = store.add(name + ".weight", std::move(w));
  l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return ad::add_row(ad::matmul(x, tape.param(weight)), tape.param(bias));
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gain = store.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = store.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return ad::layer_norm_rows(x, tape.param(gain), tape.param(bias));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int dim, int heads,
                                              Rng& rng) {
  if (heads < 1 || dim % heads != 0) throw InvalidArgument("attention width must be divisible by head count");
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".query", dim, dim, rng);
  a.key = Linear::create(store, name + ".key", dim, dim, rng);
  a.value = Linear::create(store, name + ".value", dim, dim, rng);
  a.out = Linear::create(store, name + ".out", dim, dim, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(const Pass& pass, Var queries, Var keys_values, const Matrix* mask) const {
  Tape& tape = pass.tape;
  const Var q = query(tape, queries);
  const Var k = key(tape, keys_values);
  const Var v = value(tape, keys_values);
  const Eigen::Index width = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));

  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = ad::slice_cols(q, h * width, width);
    const Var kh = ad::slice_cols(k, h * width, width);
    const Var vh = ad::slice_cols(v, h * width, width);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    if (mask != nullptr) scores = ad::add_const(scores, *mask);
    outputs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  const Var merged = heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  return out(tape, merged);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int dim, Rng& rng) {
  FeedForward f;
  f.up = Linear::create(store, name + ".up", dim, 2 * dim, rng);
  f.down = Linear::create(store, name + ".down", 2 * dim, dim, rng);
  return f;
}

Var FeedForward::operator()(const Pass& pass, Var x) const {
  return down(pass.tape, pass.drop(ad::gelu(up(pass.tape, x))));
}

Matrix window_mask(int n, int window) {
  constexpr double kForbidden = -std::numeric_limits<double>::infinity();
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = i / window == j / window ? 0.0 : kForbidden;
  return m;
}

Matrix strided_mask(int n, int stride) {
  constexpr double kForbidden = -std::numeric_limits<double>::infinity();
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = i % stride == j % stride ? 0.0 : kForbidden;
  return m;
}

}  // namespace tcca::nn
