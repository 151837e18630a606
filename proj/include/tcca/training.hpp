#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tcca/datagen.hpp"
#include "tcca/model.hpp"

namespace tcca {

// One training example: a (possibly subsampled) observed prefix and the
// decoder targets for everything after it.
struct TrainingSample {
  Matrix features;                  // T_obs x D
  std::vector<int> observed_labels;  // T_obs
  std::vector<int> target_path;      // K labels, EOS padded
  Vector target_durations;           // K, zeros after the real segments
  std::vector<bool> future_present;  // C flags, classes occurring after the prefix
};

// Frame indices kept when subsampling `frames` frames at `rate`: one index
// per block of `rate` frames, drawn uniformly inside the block when
// `jitter` is given, otherwise the first frame of each block.
std::vector<int> subsample_indices(int frames, int rate, Rng* jitter);

// Future segments after the first `observed` frames, cut to the first
// K-1 so there is always room for EOS.
SegmentSequence future_targets(const FrameSequence& video, int observed, int queries);

TrainingSample make_sample(const FrameSequence& video, double alpha, int sample_rate, int queries, int classes,
                           Rng* jitter);

// Target label sequences (without EOS) for every training video and every
// alpha; the corpus behind the precomputed transition initialization.
std::vector<std::vector<int>> target_corpus(const std::vector<FrameSequence>& videos,
                                            const std::vector<double>& alphas, int queries);

struct LossBreakdown {
  double seg = 0.0;
  double smooth = 0.0;  // already multiplied by lambda
  double duration = 0.0;
  double future = 0.0;
  double past = 0.0;
  double crf = 0.0;  // CRF NLL, or per-query cross-entropy without CRF
  double set = 0.0;
  double total = 0.0;

  std::vector<std::pair<std::string, double>> terms() const;
  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
};

struct LossVars {
  ad::Var total;
  LossBreakdown values;
};

// Sum of every enabled term. Throws NumericalError naming the first
// non-finite term. Pass a dropout stream to run in training mode.
LossVars total_loss(const Model& model, ad::Tape& tape, const TrainingSample& sample, Rng* dropout_rng = nullptr);

// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to 0 at `total`.
double learning_rate_at(long step, long total, long warmup, double peak);

// Scales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_gradients(ad::Gradients& grads, double max_norm);

// Adam moments with decoupled weight decay. Masked entries are never updated.
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  long step = 0;
  ad::Gradients m;
  ad::Gradients v;

  void init(const ad::ParamStore& store);
  void update(ad::ParamStore& store, const ad::Gradients& grads, double lr);
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown mean;
};

struct TrainResult {
  Model model;
  AdamW optimizer;
  std::string rng_state;
  int epochs = 0;
  std::vector<EpochLog> log;
};

struct TrainOptions {
  int threads = 0;  // 0: worker_count()
  std::function<void(const EpochLog&)> on_epoch;
};

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options = {});

// Writes the per-epoch log as CSV rows (epoch, term, value).
std::string epoch_log_csv(const std::vector<EpochLog>& log);

using LossFn = std::function<ad::Var(ad::Tape&)>;

// Central finite differences against the tape gradient for every learnable
// entry of the given parameters (at most `max_entries` per parameter,
// evenly spaced). Stop-gradient values from the analytic pass are replayed
// during the perturbed passes. Returns the maximum of
// |g_a - g_n| / max(1, |g_a| + |g_n|).
double gradient_check(ad::ParamStore& store, const std::vector<int>& params, const LossFn& loss,
                      double eps = 1e-4, int max_entries = 0);

// Count of observed a -> b transitions between actions in a corpus.
Matrix transition_counts(const std::vector<std::vector<int>>& corpus, int classes);

// Fraction of rows in `rows` whose argmax agrees between the two matrices
// (first `columns` entries compared).
double row_argmax_agreement(const Matrix& a, const Matrix& b, const std::vector<int>& rows, int columns);

}  // namespace tcca
