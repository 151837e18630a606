#pragma once

#include <string>

#include "tcca/autodiff.hpp"
#include "tcca/rng.hpp"

namespace tcca::nn {

using ad::ParamStore;
using ad::Tape;
using ad::Var;

// Per-forward-pass state: the tape being recorded and, in training mode,
// the random stream used for dropout masks.
struct Pass {
  Tape& tape;
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Var drop(Var x) const {
    return training && dropout > 0.0 && rng != nullptr ? ad::dropout(x, dropout, *rng) : x;
  }
};

// y = x W + b with W stored (in x out); Xavier-uniform weights, zero bias.
struct Linear {
  int weight = -1;
  int bias = -1;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
};

struct LayerNorm {
  int gain = -1;
  int bias = -1;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  Var operator()(Tape& tape, Var x) const;
};

// Scaled dot-product attention with `heads` heads over column slices.
// `mask`, when given, is added to the (queries x keys) score matrix; use
// -infinity to forbid a pair.
struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);
  Var operator()(const Pass& pass, Var queries, Var keys_values, const Matrix* mask = nullptr) const;
};

// Two-layer GeLU MLP with hidden width 2x the model width.
struct FeedForward {
  Linear up, down;

  static FeedForward create(ParamStore& store, const std::string& name, int dim, Rng& rng);
  Var operator()(const Pass& pass, Var x) const;
};

// Attention masks over a length-n sequence.
Matrix window_mask(int n, int window);   // same non-overlapping block of `window` frames
Matrix strided_mask(int n, int stride);  // same index modulo `stride`

}  // namespace tcca::nn
