#include "tcca/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcca/rng.hpp"

namespace tcca {

namespace {

struct Shape {
  int length;  // K
  int labels;  // C + 1
  int start;
  int end;
};

Shape check_shapes(const Matrix& emissions, const Matrix& transitions) {
  const auto k = static_cast<int>(emissions.rows());
  const auto labels = static_cast<int>(emissions.cols());
  if (k < 1 || labels < 1) throw InvalidArgument("CRF needs at least one position and one label");
  if (transitions.rows() != labels + 2 || transitions.cols() != labels + 2)
    throw InvalidArgument("transition matrix must be (C+3) x (C+3)");
  return {k, labels, labels, labels + 1};
}

void check_path(std::span<const int> path, const Shape& s) {
  if (static_cast<int>(path.size()) != s.length) throw InvalidArgument("path length must equal emission rows");
  for (int y : path)
    if (y < 0 || y >= s.labels) throw InvalidArgument("invalid label in CRF path");
}

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// alpha(i, y): log-sum of all prefixes ending in y at i, boundary included.
Matrix forward_table(const Matrix& e, const Matrix& m, double omega, const Shape& s) {
  Matrix alpha(s.length, s.labels);
  for (int y = 0; y < s.labels; ++y) alpha(0, y) = e(0, y) + omega * m(s.start, y);
  Vector tmp(s.labels);
  for (int i = 1; i < s.length; ++i)
    for (int y = 0; y < s.labels; ++y) {
      for (int p = 0; p < s.labels; ++p) tmp(p) = alpha(i - 1, p) + omega * m(p, y);
      alpha(i, y) = e(i, y) + log_sum_exp(tmp);
    }
  return alpha;
}

// beta(i, y): log-sum of all suffixes after position i given y at i.
Matrix backward_table(const Matrix& e, const Matrix& m, double omega, const Shape& s) {
  Matrix beta(s.length, s.labels);
  for (int y = 0; y < s.labels; ++y) beta(s.length - 1, y) = omega * m(y, s.end);
  Vector tmp(s.labels);
  for (int i = s.length - 2; i >= 0; --i)
    for (int y = 0; y < s.labels; ++y) {
      for (int n = 0; n < s.labels; ++n) tmp(n) = omega * m(y, n) + e(i + 1, n) + beta(i + 1, n);
      beta(i, y) = log_sum_exp(tmp);
    }
  return beta;
}

double partition_from_alpha(const Matrix& alpha, const Matrix& m, double omega, const Shape& s) {
  Vector last(s.labels);
  for (int y = 0; y < s.labels; ++y) last(y) = alpha(s.length - 1, y) + omega * m(y, s.end);
  return log_sum_exp(last);
}

}  // namespace

Matrix TransitionMatrix::learnable_mask(int classes) {
  const LabelSpace ls{classes};
  Matrix mask = Matrix::Ones(ls.augmented_size(), ls.augmented_size());
  mask.col(ls.start()).setZero();
  mask.row(ls.end()).setZero();
  return mask;
}

double crf_score(const Matrix& emissions, std::span<const int> path, const Matrix& transitions, double omega) {
  const Shape s = check_shapes(emissions, transitions);
  check_path(path, s);
  double emit = 0.0;
  for (int i = 0; i < s.length; ++i) emit += emissions(i, path[static_cast<std::size_t>(i)]);
  double trans = transitions(s.start, path.front()) + transitions(path.back(), s.end);
  for (int i = 0; i + 1 < s.length; ++i)
    trans += transitions(path[static_cast<std::size_t>(i)], path[static_cast<std::size_t>(i) + 1]);
  return emit + omega * trans;
}

double crf_log_partition(const Matrix& emissions, const Matrix& transitions, double omega) {
  const Shape s = check_shapes(emissions, transitions);
  return partition_from_alpha(forward_table(emissions, transitions, omega, s), transitions, omega, s);
}

double crf_nll(const Matrix& emissions, std::span<const int> path, const Matrix& transitions, double omega) {
  return crf_log_partition(emissions, transitions, omega) - crf_score(emissions, path, transitions, omega);
}

Matrix crf_marginals(const Matrix& emissions, const Matrix& transitions, double omega) {
  const Shape s = check_shapes(emissions, transitions);
  const Matrix alpha = forward_table(emissions, transitions, omega, s);
  const Matrix beta = backward_table(emissions, transitions, omega, s);
  const double log_z = partition_from_alpha(alpha, transitions, omega, s);
  return (alpha + beta).array().unaryExpr([log_z](double v) { return std::exp(v - log_z); });
}

CrfNllGradients crf_nll_gradients(const Matrix& e, std::span<const int> path, const Matrix& m, double omega) {
  const Shape s = check_shapes(e, m);
  check_path(path, s);
  const Matrix alpha = forward_table(e, m, omega, s);
  const Matrix beta = backward_table(e, m, omega, s);
  const double log_z = partition_from_alpha(alpha, m, omega, s);

  CrfNllGradients g;
  g.nll = log_z - crf_score(e, path, m, omega);
  g.emissions = (alpha + beta).array().unaryExpr([log_z](double v) { return std::exp(v - log_z); });
  g.transitions = Matrix::Zero(m.rows(), m.cols());

  // Expected transition counts minus observed ones, scaled by omega.
  for (int y = 0; y < s.labels; ++y) {
    g.transitions(s.start, y) += omega * g.emissions(0, y);
    g.transitions(y, s.end) += omega * g.emissions(s.length - 1, y);
  }
  for (int i = 0; i + 1 < s.length; ++i)
    for (int p = 0; p < s.labels; ++p)
      for (int n = 0; n < s.labels; ++n)
        g.transitions(p, n) +=
            omega * std::exp(alpha(i, p) + omega * m(p, n) + e(i + 1, n) + beta(i + 1, n) - log_z);

  for (int i = 0; i < s.length; ++i) g.emissions(i, path[static_cast<std::size_t>(i)]) -= 1.0;
  g.transitions(s.start, path.front()) -= omega;
  g.transitions(path.back(), s.end) -= omega;
  for (int i = 0; i + 1 < s.length; ++i)
    g.transitions(path[static_cast<std::size_t>(i)], path[static_cast<std::size_t>(i) + 1]) -= omega;
  return g;
}

ViterbiResult viterbi_decode(const Matrix& e, const Matrix& m, double omega) {
  const Shape s = check_shapes(e, m);
  Matrix delta(s.length, s.labels);
  Eigen::MatrixXi back(s.length, s.labels);
  for (int y = 0; y < s.labels; ++y) delta(0, y) = e(0, y) + omega * m(s.start, y);
  for (int i = 1; i < s.length; ++i)
    for (int y = 0; y < s.labels; ++y) {
      int best = 0;
      double best_score = delta(i - 1, 0) + omega * m(0, y);
      for (int p = 1; p < s.labels; ++p) {
        const double v = delta(i - 1, p) + omega * m(p, y);
        if (v > best_score) {
          best_score = v;
          best = p;
        }
      }
      delta(i, y) = e(i, y) + best_score;
      back(i, y) = best;
    }

  ViterbiResult r;
  int last = 0;
  r.score = delta(s.length - 1, 0) + omega * m(0, s.end);
  for (int y = 1; y < s.labels; ++y) {
    const double v = delta(s.length - 1, y) + omega * m(y, s.end);
    if (v > r.score) {
      r.score = v;
      last = y;
    }
  }
  r.path.assign(static_cast<std::size_t>(s.length), 0);
  r.path.back() = last;
  for (int i = s.length - 1; i > 0; --i)
    r.path[static_cast<std::size_t>(i) - 1] = back(i, r.path[static_cast<std::size_t>(i)]);
  return r;
}

std::vector<int> truncate_at_eos(std::span<const int> path, int eos) {
  auto it = std::find(path.begin(), path.end(), eos);
  return {path.begin(), it};
}

TransitionMatrix init_transitions_precomputed(const std::vector<std::vector<int>>& corpus, int classes) {
  const LabelSpace ls{classes};
  Matrix counts = Matrix::Zero(ls.augmented_size(), ls.augmented_size());
  std::size_t transitions = 0;
  for (const auto& seq : corpus) {
    if (seq.empty()) continue;
    for (int a : seq)
      if (a < 0 || a >= classes) throw InvalidArgument("corpus label out of range");
    counts(ls.start(), seq.front()) += 1.0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) counts(seq[i], seq[i + 1]) += 1.0;
    counts(seq.back(), ls.eos()) += 1.0;
    counts(ls.eos(), ls.eos()) += 1.0;
    transitions += seq.size();
  }
  if (transitions == 0) throw InvalidArgument("empty transition corpus");

  TransitionMatrix t;
  t.labels = ls;
  t.m = Matrix::Zero(ls.augmented_size(), ls.augmented_size());
  const int targets = ls.decoder_size();
  auto fill_row = [&](int row) {
    const double total = counts.row(row).head(targets).sum();
    for (int b = 0; b < targets; ++b) t.m(row, b) = std::log((counts(row, b) + 1.0) / (total + targets));
  };
  for (int a = 0; a < targets; ++a) fill_row(a);
  fill_row(ls.start());
  t.m.col(ls.start()).setConstant(kForbiddenTransition);
  t.m.row(ls.end()).setConstant(kForbiddenTransition);
  return t;
}

TransitionMatrix init_transitions_random(std::uint64_t seed, int classes, double scale) {
  const LabelSpace ls{classes};
  Rng rng(derive_seed(seed, 0x7EA5));
  TransitionMatrix t;
  t.labels = ls;
  t.m.resize(ls.augmented_size(), ls.augmented_size());
  for (Eigen::Index i = 0; i < t.m.rows(); ++i)
    for (Eigen::Index j = 0; j < t.m.cols(); ++j) t.m(i, j) = rng.uniform(-scale, scale);
  t.m.col(ls.start()).setConstant(kForbiddenTransition);
  t.m.row(ls.end()).setConstant(kForbiddenTransition);
  return t;
}

ad::Var crf_nll(ad::Var emissions, ad::Var transitions, std::span<const int> path, double omega) {
  CrfNllGradients g = crf_nll_gradients(emissions.value(), path, transitions.value(), omega);
  Matrix y(1, 1);
  y(0, 0) = g.nll;
  return emissions.tape->node(std::move(y), {emissions, transitions},
                              [emissions, transitions, de = std::move(g.emissions),
                               dm = std::move(g.transitions)](ad::Tape& t, const Matrix& grad) {
                                if (t.needs_grad(emissions)) t.grad_ref(emissions) += grad(0, 0) * de;
                                if (t.needs_grad(transitions)) t.grad_ref(transitions) += grad(0, 0) * dm;
                              });
}

Matrix exp_normalize_rows(const Matrix& m, int columns) {
  Matrix out(m.rows(), columns);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const RowVector row = m.row(r).head(columns);
    const double mx = row.maxCoeff();
    out.row(r) = (row.array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace tcca
