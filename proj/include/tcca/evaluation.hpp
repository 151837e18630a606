#pragma once

#include <functional>
#include <vector>

#include "tcca/datagen.hpp"
#include "tcca/metrics.hpp"
#include "tcca/model.hpp"

namespace tcca {

// What a predictor says about one video after seeing `observed` frames.
struct Forecast {
  std::vector<int> actions;       // future actions, EOS already removed
  std::vector<double> durations;  // one per action, any positive scale
  Label fallback = 0;             // fills the horizon when there are no actions
  LabelTrack observed;            // frame-wise segmentation of the observed prefix, may be empty
  Vector set_scores;              // C future-presence scores, set mode only
};

using Predictor = std::function<Forecast(const FrameSequence& video, int observed)>;

// Encoder on the observed prefix (first frame of each sample_rate block),
// decoder, then Viterbi with the learned transitions or per-query argmax
// without CRF.
Forecast predict(const Model& model, const FrameSequence& video, int observed);
Predictor model_predictor(const Model& model);

// Reads the answer off the ground truth through one-hot emissions and
// Viterbi with omega = 0. Scores 1.0 on every window.
Predictor oracle_predictor(int classes);

// Forecasts are laid out over all T - floor(alpha*T) remaining frames, then
// cropped to the first ceil(beta*T). MoC and segmentation Edit/F1 are means
// over videos; segmentation Acc pools all observed frames. mAP (set mode)
// is computed at the first alpha against every class after the prefix.
struct EvalOptions {
  int threads = 0;               // 0: worker_count()
  std::vector<bool> frequent;    // class partition for mAP; empty disables mAP
};

MetricsReport evaluate(const Predictor& predictor, const std::vector<FrameSequence>& videos, int classes,
                       const EvalConfig& config, const EvalOptions& options = {});

// Model evaluation on the test split, with the mAP partition taken from the training split.
MetricsReport evaluate(const Model& model, const Dataset& data, const EvalConfig& config, int threads = 0);

// Classes whose count of training videos with the class after the prefix
// is at least the median count.
std::vector<bool> frequent_classes(const std::vector<FrameSequence>& videos, double alpha, int classes);

}  // namespace tcca
