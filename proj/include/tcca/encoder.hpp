#pragma once

#include <span>
#include <vector>

#include "tcca/nn.hpp"

namespace tcca {

struct EncoderConfig {
  int stages = 2;
  int layers_per_stage = 2;
  int heads = 2;
  int hidden = 32;
  int window = 16;        // local attention block length
  int global_stride = 8;  // frames sharing index mod stride attend to each other
  double dropout = 0.0;

  void validate() const;
};

// Frame-wise action logits of every stage over the observed window.
struct StageLogits {
  std::vector<Matrix> stages;  // S entries, each T_obs x C

  int stage_count() const { return static_cast<int>(stages.size()); }
  int frames() const { return stages.empty() ? 0 : static_cast<int>(stages.front().rows()); }
  int classes() const { return stages.empty() ? 0 : static_cast<int>(stages.front().cols()); }
};

// Row t is the stage-ordered concatenation of every stage's logits at frame t.
struct SegFeatures {
  Matrix f_seg;  // T_obs x (S * C)
};

// Multi-stage refinement encoder. Stage 1 reads frame features, every later
// stage reads the softmax of its predecessor's logits. A layer is
// pre-norm residual: windowed attention, strided global attention, GeLU MLP.
class Encoder {
 public:
  Encoder(ad::ParamStore& store, const EncoderConfig& config, int input_dim, int classes, Rng& rng);

  std::vector<ad::Var> forward(const nn::Pass& pass, ad::Var features) const;

  const EncoderConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }
  int classes() const { return classes_; }

 private:
  struct Layer {
    nn::LayerNorm local_norm, global_norm, ffn_norm;
    nn::MultiHeadAttention local, global;
    nn::FeedForward ffn;
  };
  struct Stage {
    nn::Linear input;
    std::vector<Layer> layers;
    nn::LayerNorm out_norm;
    nn::Linear out;
  };

  EncoderConfig config_;
  int input_dim_;
  int classes_;
  std::vector<Stage> stages_;
};

// Inference-mode forward pass (no dropout).
StageLogits encode(const Encoder& encoder, const ad::ParamStore& store, const Matrix& features);

// Mean over stages of the mean frame-wise cross-entropy.
ad::Var seg_loss(std::span<const ad::Var> stage_logits, std::span<const int> labels);
double seg_loss(const StageLogits& logits, std::span<const int> labels);

inline constexpr double kSmoothTruncation = 4.0;

// Mean over stages, frame pairs and classes of min(|log p_t - log p_{t-1}|, tau)^2,
// with the t-1 term gradient-stopped. Zero when fewer than two frames.
ad::Var smooth_loss(ad::Tape& tape, std::span<const ad::Var> stage_logits, double tau = kSmoothTruncation);
double smooth_loss(const StageLogits& logits, double tau = kSmoothTruncation);

SegFeatures build_seg_features(const StageLogits& logits);
ad::Var build_seg_features(std::span<const ad::Var> stage_logits);

}  // namespace tcca
