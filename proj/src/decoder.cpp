#include "tcca/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tcca {

using ad::Var;

void DecoderConfig::validate() const {
  if (queries < 2) throw InvalidArgument("decoder needs at least 2 queries");
  if (layers < 1) throw InvalidArgument("decoder needs at least one layer");
  if (heads < 1 || hidden % heads != 0) throw InvalidArgument("decoder hidden size must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("decoder dropout must be in [0, 1)");
  if (max_positions < 1) throw InvalidArgument("decoder needs at least one position");
}

Decoder::Decoder(ad::ParamStore& store, const DecoderConfig& config, int seg_dim, int classes, Rng& rng)
    : config_(config), seg_dim_(seg_dim), classes_(classes) {
  config_.validate();
  Matrix pos(config_.max_positions, seg_dim);
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos(i) = rng.normal(0.0, 0.02);
  positional_ = store.add("decoder.positional", std::move(pos));
  Matrix q(config_.queries, config_.hidden);
  for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = rng.normal();
  queries_ = store.add("decoder.queries", std::move(q));
  enc2dec_ = nn::Linear::create(store, "decoder.enc2dec", seg_dim, config_.hidden, rng);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    Layer layer;
    layer.self_attn = nn::MultiHeadAttention::create(store, p + ".self_attn", config_.hidden, config_.heads, rng);
    layer.self_norm = nn::LayerNorm::create(store, p + ".self_norm", config_.hidden);
    layer.cross_attn = nn::MultiHeadAttention::create(store, p + ".cross_attn", config_.hidden, config_.heads, rng);
    layer.cross_norm = nn::LayerNorm::create(store, p + ".cross_norm", config_.hidden);
    layer.ffn = nn::FeedForward::create(store, p + ".ffn", config_.hidden, rng);
    layer.ffn_norm = nn::LayerNorm::create(store, p + ".ffn_norm", config_.hidden);
    layers_.push_back(std::move(layer));
  }
  const int labels = classes + 1;
  present_ = nn::Linear::create(store, "decoder.head_present", config_.hidden, labels, rng);
  future_ = nn::Linear::create(store, "decoder.head_future", config_.hidden, labels, rng);
  past_ = nn::Linear::create(store, "decoder.head_past", config_.hidden, labels, rng);
  const int dur_in = config_.duration_mode == DurationMode::dependent ? config_.hidden + labels : config_.hidden;
  duration_ = nn::Linear::create(store, "decoder.head_duration", dur_in, 1, rng);
  if (config_.set_head) set_ = nn::Linear::create(store, "decoder.head_set", config_.hidden, classes, rng);
}

Var Decoder::project_encoder(const nn::Pass& pass, Var f_seg) const {
  if (f_seg.cols() != seg_dim_) throw InvalidArgument("segmentation feature width does not match positional table");
  std::vector<int> positions(static_cast<std::size_t>(f_seg.rows()));
  for (std::size_t t = 0; t < positions.size(); ++t)
    positions[t] = std::min(static_cast<int>(t), config_.max_positions - 1);
  const Var pos = ad::gather_rows(pass.tape.param(positional_), positions);
  return enc2dec_(pass.tape, ad::add(f_seg, pos));
}

Var Decoder::decode_queries(const nn::Pass& pass, Var f_prime) const {
  ad::Tape& tape = pass.tape;
  Var q = tape.param(queries_);
  for (const Layer& layer : layers_) {
    q = layer.self_norm(tape, ad::add(q, pass.drop(layer.self_attn(pass, q, q))));
    q = layer.cross_norm(tape, ad::add(q, pass.drop(layer.cross_attn(pass, q, f_prime))));
    q = layer.ffn_norm(tape, ad::add(q, pass.drop(layer.ffn(pass, q))));
  }
  return q;
}

Var Decoder::head_present(ad::Tape& tape, Var q_prime) const { return present_(tape, q_prime); }
Var Decoder::head_future(ad::Tape& tape, Var q_prime) const { return future_(tape, q_prime); }
Var Decoder::head_past(ad::Tape& tape, Var q_prime) const { return past_(tape, q_prime); }

Var Decoder::head_duration(ad::Tape& tape, Var q_prime, Var a_pres) const {
  Var input = q_prime;
  if (config_.duration_mode == DurationMode::dependent) {
    const Var parts[] = {q_prime, ad::softmax_rows(a_pres)};
    input = ad::concat_cols(parts);
  }
  return normalize_durations(duration_(tape, input));
}

DecoderVars Decoder::forward(const nn::Pass& pass, Var f_seg) const {
  DecoderVars out;
  out.f_prime = project_encoder(pass, f_seg);
  out.q_prime = decode_queries(pass, out.f_prime);
  out.a_pres = head_present(pass.tape, out.q_prime);
  out.a_fut = head_future(pass.tape, out.q_prime);
  out.a_past = head_past(pass.tape, out.q_prime);
  out.d_hat = head_duration(pass.tape, out.q_prime, out.a_pres);
  if (config_.set_head) out.set_logits = set_(pass.tape, out.q_prime);
  return out;
}

DecoderOutputs decode(const Decoder& decoder, const ad::ParamStore& store, const Matrix& f_seg) {
  ad::Tape tape(&store);
  const nn::Pass pass{tape};
  const DecoderVars v = decoder.forward(pass, tape.constant(f_seg));
  DecoderOutputs out;
  out.q_prime = v.q_prime.value();
  out.a_pres = v.a_pres.value();
  out.a_fut = v.a_fut.value();
  out.a_past = v.a_past.value();
  out.d_hat = v.d_hat.value().col(0);
  if (v.set_logits) out.set_logits = v.set_logits->value();
  return out;
}

Vector normalize_durations(const Vector& raw) {
  Vector e = (raw.array() - raw.maxCoeff()).exp();
  return e / e.sum();
}

Var normalize_durations(Var raw) {
  if (raw.cols() != 1) throw InvalidArgument("raw durations must be a column");
  return ad::transpose(ad::softmax_rows(ad::transpose(raw)));
}

Var loss_duration(Var d_hat, const Vector& d_gt) {
  if (d_hat.rows() != d_gt.size() || d_hat.cols() != 1) throw InvalidArgument("duration length mismatch");
  return ad::mse(d_hat, d_gt);
}

double loss_duration(const Vector& d_hat, const Vector& d_gt) {
  if (d_hat.size() != d_gt.size()) throw InvalidArgument("duration length mismatch");
  return (d_hat - d_gt).squaredNorm() / static_cast<double>(d_hat.size());
}

BacrLosses loss_bacr(ad::Tape& tape, Var a_fut, Var a_past, Var a_pres, Var last_frame_logits) {
  const Eigen::Index k = a_pres.rows();
  const Eigen::Index labels = a_pres.cols();
  if (k < 2) throw InvalidArgument("BACR needs at least 2 queries");
  if (last_frame_logits.rows() != 1 || last_frame_logits.cols() != labels - 1)
    throw InvalidArgument("last frame logits must be 1 x C");

  const Var next_targets = tape.detach(ad::slice_rows(a_pres, 1, k - 1));
  const Var future = ad::kl_rows_sum(ad::slice_rows(a_fut, 0, k - 1), next_targets);

  const Var eos = tape.constant(Matrix::Constant(1, 1, -std::numeric_limits<double>::infinity()));
  const Var last_parts[] = {last_frame_logits, eos};
  const Var first_target = ad::concat_cols(last_parts);
  const Var target_parts[] = {first_target, ad::slice_rows(a_pres, 0, k - 1)};
  const Var prev_targets = tape.detach(ad::concat_rows(target_parts));
  const Var past = ad::kl_rows_sum(a_past, prev_targets);
  return {future, past};
}

std::pair<double, double> loss_bacr(const Matrix& a_fut, const Matrix& a_past, const Matrix& a_pres,
                                    const RowVector& last_frame_logits) {
  ad::Tape tape;
  const BacrLosses l = loss_bacr(tape, tape.constant(a_fut), tape.constant(a_past), tape.constant(a_pres),
                                 tape.constant(last_frame_logits));
  return {l.future.scalar(), l.past.scalar()};
}

double kl_divergence(const RowVector& p, const RowVector& q) {
  if (p.size() != q.size()) throw InvalidArgument("KL arguments differ in length");
  constexpr double eps = 1e-12;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) kl += p(j) * (std::log(std::max(p(j), eps)) - std::log(std::max(q(j), eps)));
  return kl;
}

Var loss_per_query_ce(Var a_pres, std::span<const int> targets) { return ad::cross_entropy_rows(a_pres, targets); }

double loss_per_query_ce(const Matrix& a_pres, std::span<const int> targets) {
  ad::Tape tape;
  return loss_per_query_ce(tape.constant(a_pres), targets).scalar();
}

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

Vector set_probabilities(const Matrix& set_logits) {
  Vector p(set_logits.cols());
  for (Eigen::Index c = 0; c < set_logits.cols(); ++c) {
    double absent = 0.0;  // -log prod (1 - sigmoid)
    for (Eigen::Index i = 0; i < set_logits.rows(); ++i) absent += softplus(set_logits(i, c));
    p(c) = -std::expm1(-absent);
  }
  return p;
}

Var loss_set_bce(Var set_logits, const std::vector<bool>& present) {
  const Matrix& z = set_logits.value();
  if (static_cast<Eigen::Index>(present.size()) != z.cols()) throw InvalidArgument("set target width mismatch");
  const double classes = static_cast<double>(z.cols());
  Vector absent(z.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    absent(c) = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) absent(c) += softplus(z(i, c));
    // -log(1 - exp(-absent)) for positives, absent itself for negatives.
    loss += present[static_cast<std::size_t>(c)] ? -std::log(std::max(-std::expm1(-absent(c)), 1e-300)) : absent(c);
  }
  Matrix y(1, 1);
  y(0, 0) = loss / classes;
  return set_logits.tape->node(std::move(y), {set_logits}, [set_logits, present, absent, classes](ad::Tape& t, const Matrix& g) {
    const Matrix& zz = set_logits.value();
    Matrix& dz = t.grad_ref(set_logits);
    for (Eigen::Index c = 0; c < zz.cols(); ++c) {
      const double outer = present[static_cast<std::size_t>(c)] ? -1.0 / std::max(std::expm1(absent(c)), 1e-300) : 1.0;
      for (Eigen::Index i = 0; i < zz.rows(); ++i) dz(i, c) += g(0, 0) / classes * outer * sigmoid(zz(i, c));
    }
  });
}

}  // namespace tcca
