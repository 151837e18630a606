#include "tcca/encoder.hpp"

#include <string>

namespace tcca {

using ad::Var;

void EncoderConfig::validate() const {
  if (stages < 1) throw InvalidArgument("encoder needs at least one stage");
  if (layers_per_stage < 1) throw InvalidArgument("encoder needs at least one layer per stage");
  if (heads < 1 || hidden % heads != 0) throw InvalidArgument("encoder hidden size must be divisible by heads");
  if (window < 2) throw InvalidArgument("encoder window must be at least 2");
  if (global_stride < 1) throw InvalidArgument("encoder global stride must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("encoder dropout must be in [0, 1)");
}

Encoder::Encoder(ad::ParamStore& store, const EncoderConfig& config, int input_dim, int classes, Rng& rng)
    : config_(config), input_dim_(input_dim), classes_(classes) {
  config_.validate();
  if (input_dim < 1 || classes < 1) throw InvalidArgument("encoder needs positive input and class counts");
  for (int s = 0; s < config_.stages; ++s) {
    const std::string prefix = "encoder.stage" + std::to_string(s);
    Stage stage;
    stage.input = nn::Linear::create(store, prefix + ".input", s == 0 ? input_dim : classes, config_.hidden, rng);
    for (int l = 0; l < config_.layers_per_stage; ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      Layer layer;
      layer.local_norm = nn::LayerNorm::create(store, lp + ".local_norm", config_.hidden);
      layer.local = nn::MultiHeadAttention::create(store, lp + ".local", config_.hidden, config_.heads, rng);
      layer.global_norm = nn::LayerNorm::create(store, lp + ".global_norm", config_.hidden);
      layer.global = nn::MultiHeadAttention::create(store, lp + ".global", config_.hidden, config_.heads, rng);
      layer.ffn_norm = nn::LayerNorm::create(store, lp + ".ffn_norm", config_.hidden);
      layer.ffn = nn::FeedForward::create(store, lp + ".ffn", config_.hidden, rng);
      stage.layers.push_back(std::move(layer));
    }
    stage.out_norm = nn::LayerNorm::create(store, prefix + ".out_norm", config_.hidden);
    stage.out = nn::Linear::create(store, prefix + ".out", config_.hidden, classes, rng);
    stages_.push_back(std::move(stage));
  }
}

std::vector<Var> Encoder::forward(const nn::Pass& pass, Var features) const {
  if (features.rows() < 1) throw InvalidArgument("encoder needs at least one frame");
  if (features.cols() != input_dim_) throw InvalidArgument("encoder input dimension mismatch");
  if (!features.value().allFinite()) throw InvalidArgument("non-finite features");

  ad::Tape& tape = pass.tape;
  const int frames = static_cast<int>(features.rows());
  const Matrix local_mask = nn::window_mask(frames, config_.window);
  const Matrix global_mask = nn::strided_mask(frames, config_.global_stride);

  std::vector<Var> logits;
  Var input = features;
  for (const Stage& stage : stages_) {
    Var x = stage.input(tape, input);
    for (const Layer& layer : stage.layers) {
      const Var l = layer.local_norm(tape, x);
      x = ad::add(x, pass.drop(layer.local(pass, l, l, &local_mask)));
      const Var g = layer.global_norm(tape, x);
      x = ad::add(x, pass.drop(layer.global(pass, g, g, &global_mask)));
      x = ad::add(x, pass.drop(layer.ffn(pass, layer.ffn_norm(tape, x))));
    }
    const Var out = stage.out(tape, stage.out_norm(tape, x));
    logits.push_back(out);
    input = ad::softmax_rows(out);
  }
  return logits;
}

StageLogits encode(const Encoder& encoder, const ad::ParamStore& store, const Matrix& features) {
  ad::Tape tape(&store);
  const nn::Pass pass{tape};
  StageLogits out;
  for (Var v : encoder.forward(pass, tape.constant(features))) out.stages.push_back(v.value());
  return out;
}

Var seg_loss(std::span<const Var> stage_logits, std::span<const int> labels) {
  if (stage_logits.empty()) throw InvalidArgument("seg_loss needs at least one stage");
  std::vector<Var> terms;
  for (Var s : stage_logits) terms.push_back(ad::cross_entropy_rows(s, labels));
  return ad::scale(ad::add_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

double seg_loss(const StageLogits& logits, std::span<const int> labels) {
  ad::Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : logits.stages) vars.push_back(tape.constant(m));
  return seg_loss(vars, labels).scalar();
}

Var smooth_loss(ad::Tape& tape, std::span<const Var> stage_logits, double tau) {
  if (stage_logits.empty()) throw InvalidArgument("smooth_loss needs at least one stage");
  const Eigen::Index frames = stage_logits.front().rows();
  if (frames < 2) return tape.constant(Matrix::Zero(1, 1));
  std::vector<Var> terms;
  for (Var s : stage_logits) {
    const Var logp = ad::log_softmax_rows(s);
    const Var current = ad::slice_rows(logp, 1, frames - 1);
    const Var previous = tape.detach(ad::slice_rows(logp, 0, frames - 1));
    terms.push_back(ad::clamped_square_mean(ad::sub(current, previous), tau));
  }
  return ad::scale(ad::add_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

double smooth_loss(const StageLogits& logits, double tau) {
  ad::Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : logits.stages) vars.push_back(tape.constant(m));
  return smooth_loss(tape, vars, tau).scalar();
}

SegFeatures build_seg_features(const StageLogits& logits) {
  SegFeatures f;
  f.f_seg.resize(logits.frames(), static_cast<Eigen::Index>(logits.stage_count()) * logits.classes());
  for (int s = 0; s < logits.stage_count(); ++s)
    f.f_seg.middleCols(static_cast<Eigen::Index>(s) * logits.classes(), logits.classes()) =
        logits.stages[static_cast<std::size_t>(s)];
  return f;
}

Var build_seg_features(std::span<const Var> stage_logits) {
  return stage_logits.size() == 1 ? stage_logits.front() : ad::concat_cols(stage_logits);
}

}  // namespace tcca
