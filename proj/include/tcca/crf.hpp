#pragma once

// Linear-chain CRF over fixed-length query emissions.
//
// Emission rows have C+1 entries (actions then EOS). The transition matrix
// is (C+3) x (C+3) over {actions, EOS, START, END}; a path y_1..y_K scores
//
//   sum_i e[i, y_i] + omega * (M[START, y_1] + sum_i M[y_i, y_{i+1}] + M[y_K, END]).
//
// Transitions into START and out of END are pinned at kForbiddenTransition
// and masked out of learning.

#include <cstdint>
#include <span>
#include <vector>

#include "tcca/autodiff.hpp"
#include "tcca/core.hpp"

namespace tcca {

inline constexpr double kForbiddenTransition = -1e4;

struct TransitionMatrix {
  LabelSpace labels;
  Matrix m;  // (C+3) x (C+3) log-scores

  // 1 where the entry is learnable, 0 for the pinned START column and END row.
  static Matrix learnable_mask(int classes);
};

struct CrfConfig {
  double omega = 1.0;
  enum class Init { random, precomputed } init = Init::precomputed;
};

double crf_score(const Matrix& emissions, std::span<const int> path, const Matrix& transitions, double omega);
double crf_log_partition(const Matrix& emissions, const Matrix& transitions, double omega);
double crf_nll(const Matrix& emissions, std::span<const int> path, const Matrix& transitions, double omega);

struct CrfNllGradients {
  double nll = 0.0;
  Matrix emissions;    // d nll / d emissions
  Matrix transitions;  // d nll / d M
};

// Forward-backward: value and exact gradient of the NLL.
CrfNllGradients crf_nll_gradients(const Matrix& emissions, std::span<const int> path, const Matrix& transitions,
                                  double omega);

// Per-position label marginals under the CRF distribution (K x (C+1)).
Matrix crf_marginals(const Matrix& emissions, const Matrix& transitions, double omega);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

// Max-score path. Ties go to the lower label id, resolved from the last
// position backwards (final label first, then each backpointer).
ViterbiResult viterbi_decode(const Matrix& emissions, const Matrix& transitions, double omega);

// Labels strictly before the first EOS; the whole path when none is present.
std::vector<int> truncate_at_eos(std::span<const int> path, int eos);

// Laplace-smoothed (eps = 1) empirical transitions from label sequences
// without EOS: row a over targets {actions, EOS}, START row from first
// labels, EOS row from the EOS padding that follows every sequence. The
// END column is 0 for every label row.
TransitionMatrix init_transitions_precomputed(const std::vector<std::vector<int>>& corpus, int classes);
TransitionMatrix init_transitions_random(std::uint64_t seed, int classes, double scale = 0.1);

// Tape op: NLL with gradients into both emissions and transitions.
ad::Var crf_nll(ad::Var emissions, ad::Var transitions, std::span<const int> path, double omega);

// Row-wise softmax restricted to the first `columns` entries (e.g. actions
// only), used for visualising and comparing learned transitions.
Matrix exp_normalize_rows(const Matrix& m, int columns);

}  // namespace tcca
