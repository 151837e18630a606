#include "tcca/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tcca/parallel.hpp"

namespace tcca {

using ad::Var;

std::vector<int> subsample_indices(int frames, int rate, Rng* jitter) {
  if (frames < 1 || rate < 1) throw InvalidArgument("subsampling needs positive frame count and rate");
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>((frames + rate - 1) / rate));
  for (int begin = 0; begin < frames; begin += rate) {
    const int width = std::min(rate, frames - begin);
    idx.push_back(begin + (jitter != nullptr ? jitter->uniform_int(0, width - 1) : 0));
  }
  return idx;
}

SegmentSequence future_targets(const FrameSequence& video, int observed, int queries) {
  if (observed < 1 || observed >= video.length()) throw InvalidArgument("observed prefix must leave a future");
  const std::span<const int> rest(video.labels.data() + observed, video.labels.size() - static_cast<std::size_t>(observed));
  SegmentSequence seg = frames_to_segments(rest);
  const auto keep = static_cast<std::size_t>(std::max(queries - 1, 0));
  if (seg.actions.size() > keep) {
    seg.actions.resize(keep);
    seg.durations.resize(keep);
  }
  return seg;
}

TrainingSample make_sample(const FrameSequence& video, double alpha, int sample_rate, int queries, int classes,
                           Rng* jitter) {
  const int total = video.length();
  const int observed = WindowSpec{alpha, 0.0}.observed_frames(total);
  if (observed < 1 || observed >= total) throw InvalidArgument("alpha leaves no observed frames or no future");

  TrainingSample s;
  const std::vector<int> idx = subsample_indices(observed, sample_rate, jitter);
  s.features.resize(static_cast<Eigen::Index>(idx.size()), video.features.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    s.features.row(static_cast<Eigen::Index>(i)) = video.features.row(idx[i]);
    s.observed_labels.push_back(video.labels[static_cast<std::size_t>(idx[i])]);
  }

  const SegmentSequence fut = future_targets(video, observed, queries);
  const LabelSpace ls{classes};
  s.target_path.assign(static_cast<std::size_t>(queries), ls.eos());
  s.target_durations = Vector::Zero(queries);
  const double covered = fut.total_frames();
  for (int i = 0; i < fut.size(); ++i) {
    s.target_path[static_cast<std::size_t>(i)] = fut.actions[static_cast<std::size_t>(i)];
    s.target_durations(i) = fut.durations[static_cast<std::size_t>(i)] / covered;
  }
  s.future_present.assign(static_cast<std::size_t>(classes), false);
  for (int t = observed; t < total; ++t) s.future_present[static_cast<std::size_t>(video.labels[static_cast<std::size_t>(t)])] = true;
  return s;
}

std::vector<std::vector<int>> target_corpus(const std::vector<FrameSequence>& videos,
                                            const std::vector<double>& alphas, int queries) {
  std::vector<std::vector<int>> corpus;
  for (const auto& v : videos)
    for (double a : alphas) {
      const int observed = WindowSpec{a, 0.0}.observed_frames(v.length());
      if (observed < 1 || observed >= v.length()) continue;
      corpus.push_back(future_targets(v, observed, queries).actions);
    }
  return corpus;
}

std::vector<std::pair<std::string, double>> LossBreakdown::terms() const {
  return {{"seg", seg},   {"smooth", smooth}, {"duration", duration}, {"future", future},
          {"past", past}, {"crf", crf},       {"set", set},           {"total", total}};
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  seg += o.seg;
  smooth += o.smooth;
  duration += o.duration;
  future += o.future;
  past += o.past;
  crf += o.crf;
  set += o.set;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const {
  LossBreakdown r = *this;
  r.seg *= s;
  r.smooth *= s;
  r.duration *= s;
  r.future *= s;
  r.past *= s;
  r.crf *= s;
  r.set *= s;
  r.total *= s;
  return r;
}

LossVars total_loss(const Model& model, ad::Tape& tape, const TrainingSample& sample, Rng* dropout_rng) {
  const RunConfig& cfg = model.config;
  const TrainConfig& tc = cfg.train;
  const bool training = dropout_rng != nullptr;
  const nn::Pass enc_pass{tape, training, cfg.encoder.dropout, dropout_rng};
  const nn::Pass dec_pass{tape, training, cfg.decoder.dropout, dropout_rng};

  LossVars out;
  std::vector<Var> terms;
  auto add_term = [&](const char* name, Var v, double& slot) {
    slot = v.scalar();
    if (!std::isfinite(slot)) throw NumericalError(std::string("non-finite loss term '") + name + "'");
    terms.push_back(v);
  };

  const std::vector<Var> stages = model.encoder->forward(enc_pass, tape.constant(sample.features));
  if (tc.use_seg) add_term("seg", seg_loss(stages, sample.observed_labels), out.values.seg);
  if (tc.use_smooth && tc.lambda > 0.0)
    add_term("smooth", ad::scale(smooth_loss(tape, stages), tc.lambda), out.values.smooth);

  const DecoderVars dec = model.decoder->forward(dec_pass, build_seg_features(stages));
  if (tc.use_duration && !model.set_mode())
    add_term("duration", loss_duration(dec.d_hat, sample.target_durations), out.values.duration);
  if (tc.use_bacr_fut || tc.use_bacr_past) {
    const Var last = ad::slice_rows(stages.back(), stages.back().rows() - 1, 1);
    const BacrLosses bacr = loss_bacr(tape, dec.a_fut, dec.a_past, dec.a_pres, last);
    if (tc.use_bacr_fut) add_term("future", bacr.future, out.values.future);
    if (tc.use_bacr_past) add_term("past", bacr.past, out.values.past);
  }
  if (model.has_crf())
    add_term("crf", crf_nll(dec.a_pres, tape.param(model.transitions), sample.target_path, cfg.crf.omega),
             out.values.crf);
  else
    add_term("crf", loss_per_query_ce(dec.a_pres, sample.target_path), out.values.crf);
  if (model.set_mode() && dec.set_logits)
    add_term("set", loss_set_bce(*dec.set_logits, sample.future_present), out.values.set);

  out.total = ad::add_scalars(terms);
  out.values.total = out.total.scalar();
  if (!std::isfinite(out.values.total)) throw NumericalError("non-finite loss term 'total'");
  return out;
}

double learning_rate_at(long step, long total, long warmup, double peak) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_gradients(ad::Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

void AdamW::init(const ad::ParamStore& store) {
  step = 0;
  m = store.zeros();
  v = store.zeros();
}

void AdamW::update(ad::ParamStore& store, const ad::Gradients& grads, double lr) {
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (int p = 0; p < store.size(); ++p) {
    const auto i = static_cast<std::size_t>(p);
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
    Matrix delta = (m[i] / c1).array() / ((v[i] / c2).array().sqrt() + eps);
    delta += weight_decay * store.value(p);
    if (const auto& mask = store.mask(p)) delta = delta.cwiseProduct(*mask);
    store.value(p) -= lr * delta;
  }
}

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  const TrainConfig& tc = config.train;
  if (data.train.empty()) throw InvalidArgument("training set is empty");
  const int threads = options.threads > 0 ? options.threads : worker_count();
  const int queries = config.decoder.queries;

  TrainResult result{build_model(config, data.classes, data.feature_dim,
                                 target_corpus(data.train, tc.alpha_set, queries)),
                     {}, {}, 0, {}};
  Model& model = result.model;
  result.optimizer.weight_decay = tc.weight_decay;
  result.optimizer.init(model.store);

  Rng rng(derive_seed(tc.seed, 0x7A1A));
  const auto n = data.train.size();
  const auto batch = static_cast<std::size_t>(tc.batch_size);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * tc.epochs;
  const long warmup_steps = steps_per_epoch * tc.warmup_epochs;

  std::vector<ad::Gradients> grads(std::min(batch, n), model.store.zeros());
  std::vector<LossBreakdown> losses(grads.size());
  ad::Gradients summed = model.store.zeros();
  std::uint64_t sample_counter = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    std::vector<double> alphas(n);
    for (auto& a : alphas) a = tc.alpha_set[rng.below(tc.alpha_set.size())];

    LossBreakdown epoch_sum;
    double lr = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t count = std::min(batch, n - begin);
      parallel_for(count, threads, [&](std::size_t i) {
        const std::size_t pos = begin + i;
        Rng srng(derive_seed(tc.seed, 0x5A3B, sample_counter + pos));
        const TrainingSample sample =
            make_sample(data.train[order[pos]], alphas[pos], tc.sample_rate, queries, data.classes, &srng);
        ad::Tape tape(&model.store);
        const LossVars lv = total_loss(model, tape, sample, &srng);
        tape.backward(lv.total);
        for (auto& g : grads[i]) g.setZero();
        tape.accumulate_param_grads(grads[i]);
        losses[i] = lv.values;
      });
      for (auto& g : summed) g.setZero();
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t p = 0; p < summed.size(); ++p) summed[p] += grads[i][p];
        epoch_sum += losses[i];
      }
      for (auto& g : summed) g /= static_cast<double>(count);
      clip_gradients(summed, tc.grad_clip);
      lr = learning_rate_at(result.optimizer.step, total_steps, warmup_steps, tc.learning_rate);
      result.optimizer.update(model.store, summed, lr);
    }
    sample_counter += n;

    EpochLog entry{epoch, lr, epoch_sum.scaled(1.0 / static_cast<double>(n))};
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
  }
  result.epochs = tc.epochs;
  result.rng_state = rng.state();
  return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,term,value\n";
  char buf[64];
  for (const auto& e : log) {
    for (const auto& [name, value] : e.mean.terms()) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      os << e.epoch << ',' << name << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", e.learning_rate);
    os << e.epoch << ",learning_rate," << buf << '\n';
  }
  return os.str();
}

double gradient_check(ad::ParamStore& store, const std::vector<int>& params, const LossFn& loss, double eps,
                      int max_entries) {
  std::vector<Matrix> frozen;
  ad::Gradients analytic = store.zeros();
  {
    ad::Tape tape(&store);
    tape.record_detached(&frozen);
    const Var l = loss(tape);
    tape.backward(l);
    tape.accumulate_param_grads(analytic);
  }
  auto evaluate = [&] {
    ad::Tape tape(&store);
    tape.replay_detached(&frozen);
    return loss(tape).scalar();
  };

  double worst = 0.0;
  for (int p : params) {
    Matrix& value = store.value(p);
    const auto& mask = store.mask(p);
    const Eigen::Index size = value.size();
    const Eigen::Index step =
        max_entries > 0 && size > max_entries ? (size + max_entries - 1) / max_entries : 1;
    for (Eigen::Index k = 0; k < size; k += step) {
      if (mask && (*mask)(k) == 0.0) continue;
      const double orig = value(k);
      value(k) = orig + eps;
      const double up = evaluate();
      value(k) = orig - eps;
      const double down = evaluate();
      value(k) = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[static_cast<std::size_t>(p)](k);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric)));
    }
  }
  return worst;
}

Matrix transition_counts(const std::vector<std::vector<int>>& corpus, int classes) {
  Matrix counts = Matrix::Zero(classes, classes);
  for (const auto& seq : corpus)
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) counts(seq[i], seq[i + 1]) += 1.0;
  return counts;
}

double row_argmax_agreement(const Matrix& a, const Matrix& b, const std::vector<int>& rows, int columns) {
  if (rows.empty()) return 0.0;
  int agree = 0;
  for (int r : rows) {
    Eigen::Index ia = 0, ib = 0;
    a.row(r).head(columns).maxCoeff(&ia);
    b.row(r).head(columns).maxCoeff(&ib);
    agree += ia == ib;
  }
  return static_cast<double>(agree) / static_cast<double>(rows.size());
}

}  // namespace tcca
