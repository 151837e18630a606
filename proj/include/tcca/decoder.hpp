#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tcca/nn.hpp"

namespace tcca {

enum class DurationMode {
  dependent,    // duration reads [q', softmax(present logits)]
  independent,  // duration reads q' only
};

struct DecoderConfig {
  int queries = 8;  // K
  int layers = 2;
  int heads = 2;
  int hidden = 64;  // D_dec
  double dropout = 0.0;
  int max_positions = 256;
  DurationMode duration_mode = DurationMode::dependent;
  bool set_head = false;  // per-query multi-label head for set prediction

  void validate() const;
};

// Inference values of one decoder pass. Logit widths are C+1 (EOS last).
struct DecoderOutputs {
  Matrix q_prime;  // K x D_dec
  Matrix a_pres;
  Matrix a_fut;
  Matrix a_past;
  Vector d_hat;      // K normalized durations
  Matrix set_logits;  // K x C, empty unless set_head
};

struct DecoderVars {
  ad::Var f_prime;
  ad::Var q_prime;
  ad::Var a_pres;
  ad::Var a_fut;
  ad::Var a_past;
  ad::Var d_hat;  // K x 1
  std::optional<ad::Var> set_logits;
};

// Query-based parallel decoder. Encoder features plus learned positions are
// projected to the decoder width; K learned queries then run post-norm
// layers of self-attention, cross-attention to the projected frames, and a
// GeLU MLP. Every head is a per-query linear map.
class Decoder {
 public:
  Decoder(ad::ParamStore& store, const DecoderConfig& config, int seg_dim, int classes, Rng& rng);

  ad::Var project_encoder(const nn::Pass& pass, ad::Var f_seg) const;
  ad::Var decode_queries(const nn::Pass& pass, ad::Var f_prime) const;
  ad::Var head_present(ad::Tape& tape, ad::Var q_prime) const;
  ad::Var head_future(ad::Tape& tape, ad::Var q_prime) const;
  ad::Var head_past(ad::Tape& tape, ad::Var q_prime) const;
  ad::Var head_duration(ad::Tape& tape, ad::Var q_prime, ad::Var a_pres) const;

  DecoderVars forward(const nn::Pass& pass, ad::Var f_seg) const;

  const DecoderConfig& config() const { return config_; }
  int classes() const { return classes_; }
  int seg_dim() const { return seg_dim_; }
  int positional_param() const { return positional_; }
  int query_param() const { return queries_; }
  const nn::Linear& enc2dec() const { return enc2dec_; }
  const nn::Linear& present_head() const { return present_; }
  const nn::Linear& duration_head() const { return duration_; }

 private:
  struct Layer {
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ffn;
    nn::LayerNorm self_norm, cross_norm, ffn_norm;
  };

  DecoderConfig config_;
  int seg_dim_;
  int classes_;
  int positional_ = -1;
  int queries_ = -1;
  nn::Linear enc2dec_;
  std::vector<Layer> layers_;
  nn::Linear present_, future_, past_, duration_, set_;
};

DecoderOutputs decode(const Decoder& decoder, const ad::ParamStore& store, const Matrix& f_seg);

// exp-normalize over all entries after subtracting the maximum.
Vector normalize_durations(const Vector& raw);
ad::Var normalize_durations(ad::Var raw);  // raw is K x 1

// (1/K) * sum_i (d_i - d_hat_i)^2
ad::Var loss_duration(ad::Var d_hat, const Vector& d_gt);
double loss_duration(const Vector& d_hat, const Vector& d_gt);

struct BacrLosses {
  ad::Var future;
  ad::Var past;
};

// future = sum_{i<K} KL(a_fut_i || a_pres_{i+1});
// past = KL(a_past_1 || last observed frame) + sum_{i>1} KL(a_past_i || a_pres_{i-1}).
// Targets are gradient-stopped. `last_frame_logits` is 1 x C (final encoder
// stage at the last observed frame) and gets -inf appended for EOS.
BacrLosses loss_bacr(ad::Tape& tape, ad::Var a_fut, ad::Var a_past, ad::Var a_pres, ad::Var last_frame_logits);
std::pair<double, double> loss_bacr(const Matrix& a_fut, const Matrix& a_past, const Matrix& a_pres,
                                    const RowVector& last_frame_logits);

// KL(p || q) = sum p ln(p / q) for probability vectors, 1e-12 floor in the logs.
double kl_divergence(const RowVector& p, const RowVector& q);

// Mean cross-entropy of every query against its positional target.
ad::Var loss_per_query_ce(ad::Var a_pres, std::span<const int> targets);
double loss_per_query_ce(const Matrix& a_pres, std::span<const int> targets);

// Set-prediction loss: class c is predicted present with probability
// 1 - prod_i (1 - sigmoid(z_ic)) over queries; mean binary cross-entropy
// against `present` (one flag per class).
ad::Var loss_set_bce(ad::Var set_logits, const std::vector<bool>& present);
Vector set_probabilities(const Matrix& set_logits);

}  // namespace tcca
