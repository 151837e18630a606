#include "tcca/evaluation.hpp"

#include <algorithm>

#include "tcca/parallel.hpp"
#include "tcca/training.hpp"

namespace tcca {

namespace {

std::vector<int> row_argmax(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> segment_labels(std::span<const int> track) {
  std::vector<int> labels;
  for (const Span& s : track_to_spans(track)) labels.push_back(s.label);
  return labels;
}

struct VideoScores {
  std::vector<double> moc;  // alpha-major, beta-minor; NaN when the window does not fit
  std::vector<SegmentationScores> seg;  // per alpha
  std::vector<int> seg_frames;          // per alpha, observed frames scored
  std::vector<int> seg_hits;
  Vector set_scores;
  std::vector<bool> set_gt;
};

}  // namespace

Forecast predict(const Model& model, const FrameSequence& video, int observed) {
  const int rate = model.config.train.sample_rate;
  const std::vector<int> idx = subsample_indices(observed, rate, nullptr);
  Matrix features(static_cast<Eigen::Index>(idx.size()), video.features.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) features.row(static_cast<Eigen::Index>(i)) = video.features.row(idx[i]);

  const StageLogits logits = encode(*model.encoder, model.store, features);
  const DecoderOutputs dec = decode(*model.decoder, model.store, build_seg_features(logits).f_seg);

  const std::vector<int> path = model.has_crf()
                                    ? viterbi_decode(dec.a_pres, model.transition_matrix(), model.config.crf.omega).path
                                    : row_argmax(dec.a_pres);
  Forecast f;
  f.actions = truncate_at_eos(path, LabelSpace{model.classes}.eos());
  for (std::size_t i = 0; i < f.actions.size(); ++i)
    f.durations.push_back(model.set_mode() ? 1.0 : dec.d_hat(static_cast<Eigen::Index>(i)));

  const std::vector<int> seg = row_argmax(logits.stages.back());
  f.observed.resize(static_cast<std::size_t>(observed));
  for (int t = 0; t < observed; ++t) f.observed[static_cast<std::size_t>(t)] = seg[static_cast<std::size_t>(t / rate)];
  f.fallback = seg.back();
  if (model.set_mode()) f.set_scores = set_probabilities(dec.set_logits);
  return f;
}

Predictor model_predictor(const Model& model) {
  return [&model](const FrameSequence& video, int observed) { return predict(model, video, observed); };
}

Predictor oracle_predictor(int classes) {
  return [classes](const FrameSequence& video, int observed) {
    const LabelSpace ls{classes};
    const std::span<const int> rest(video.labels.data() + observed,
                                    video.labels.size() - static_cast<std::size_t>(observed));
    const SegmentSequence fut = frames_to_segments(rest);
    const int k = fut.size() + 1;
    Matrix emissions = Matrix::Zero(k, ls.decoder_size());
    for (int i = 0; i < fut.size(); ++i) emissions(i, fut.actions[static_cast<std::size_t>(i)]) = 10.0;
    emissions(k - 1, ls.eos()) = 10.0;
    const Matrix transitions = Matrix::Zero(ls.augmented_size(), ls.augmented_size());

    Forecast f;
    f.actions = truncate_at_eos(viterbi_decode(emissions, transitions, 0.0).path, ls.eos());
    for (int d : fut.durations) f.durations.push_back(d);
    f.observed.assign(video.labels.begin(), video.labels.begin() + observed);
    f.fallback = video.labels[static_cast<std::size_t>(observed) - 1];
    f.set_scores = Vector::Zero(classes);
    for (int a : fut.actions) f.set_scores(a) = 1.0;
    return f;
  };
}

MetricsReport evaluate(const Predictor& predictor, const std::vector<FrameSequence>& videos, int classes,
                       const EvalConfig& config, const EvalOptions& options) {
  const auto& alphas = config.alpha_set;
  const auto& betas = config.beta_set;
  const int threads = options.threads > 0 ? options.threads : worker_count();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<VideoScores> per_video(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t v) {
    const FrameSequence& video = videos[v];
    const int total = video.length();
    VideoScores& out = per_video[v];
    out.moc.assign(alphas.size() * betas.size(), nan);
    out.seg.resize(alphas.size());
    out.seg_frames.assign(alphas.size(), 0);
    out.seg_hits.assign(alphas.size(), 0);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const int observed = WindowSpec{alphas[a], 0.0}.observed_frames(total);
      if (observed < 1 || observed >= total) continue;
      const Forecast f = predictor(video, observed);
      const LabelTrack future =
          decode_to_frames(f.actions, f.durations, total - observed, f.fallback);
      for (std::size_t b = 0; b < betas.size(); ++b) {
        const WindowSpec spec{alphas[a], betas[b]};
        if (!spec.valid_for(total)) continue;
        const auto horizon = static_cast<std::size_t>(spec.future_frames(total));
        const std::span<const int> gt(video.labels.data() + observed, horizon);
        out.moc[a * betas.size() + b] = moc(std::span<const int>(future.data(), horizon), gt, classes);
      }
      if (!f.observed.empty()) {
        const std::span<const int> gt(video.labels.data(), static_cast<std::size_t>(observed));
        const std::span<const int> pred(f.observed);
        const auto ps = track_to_spans(pred);
        const auto gs = track_to_spans(gt);
        SegmentationScores& s = out.seg[a];
        s.acc = frame_acc(pred, gt);
        s.edit = edit_score(segment_labels(pred), segment_labels(gt));
        s.f1_10 = f1_at(ps, gs, 0.10);
        s.f1_25 = f1_at(ps, gs, 0.25);
        s.f1_50 = f1_at(ps, gs, 0.50);
        out.seg_frames[a] = observed;
        for (int t = 0; t < observed; ++t) out.seg_hits[a] += pred[static_cast<std::size_t>(t)] == gt[static_cast<std::size_t>(t)];
      }
      if (a == 0 && f.set_scores.size() == classes) {
        out.set_scores = f.set_scores;
        out.set_gt.assign(static_cast<std::size_t>(classes), false);
        for (int t = observed; t < total; ++t) out.set_gt[static_cast<std::size_t>(video.labels[static_cast<std::size_t>(t)])] = true;
      }
    }
  });

  MetricsReport report;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (std::size_t b = 0; b < betas.size(); ++b) {
      double sum = 0.0;
      int count = 0;
      for (const auto& pv : per_video)
        if (!std::isnan(pv.moc[a * betas.size() + b])) {
          sum += pv.moc[a * betas.size() + b];
          ++count;
        }
      if (count > 0) report.moc[{alphas[a], betas[b]}] = sum / count;
    }
    SegmentationScores s;
    long frames = 0, hits = 0;
    int count = 0;
    for (const auto& pv : per_video) {
      if (pv.seg_frames[a] == 0) continue;
      frames += pv.seg_frames[a];
      hits += pv.seg_hits[a];
      s.edit += pv.seg[a].edit;
      s.f1_10 += pv.seg[a].f1_10;
      s.f1_25 += pv.seg[a].f1_25;
      s.f1_50 += pv.seg[a].f1_50;
      ++count;
    }
    if (count > 0) {
      s.acc = static_cast<double>(hits) / static_cast<double>(frames);
      s.edit /= count;
      s.f1_10 /= count;
      s.f1_25 /= count;
      s.f1_50 /= count;
      report.segmentation[alphas[a]] = s;
    }
  }

  if (!options.frequent.empty()) {
    std::vector<std::size_t> rows;
    for (std::size_t v = 0; v < per_video.size(); ++v)
      if (per_video[v].set_scores.size() == classes) rows.push_back(v);
    if (!rows.empty()) {
      Matrix scores(static_cast<Eigen::Index>(rows.size()), classes);
      std::vector<std::vector<bool>> gt;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        scores.row(static_cast<Eigen::Index>(r)) = per_video[rows[r]].set_scores.transpose();
        gt.push_back(per_video[rows[r]].set_gt);
      }
      report.map = map_multilabel(scores, gt, options.frequent);
    }
  }
  return report;
}

std::vector<bool> frequent_classes(const std::vector<FrameSequence>& videos, double alpha, int classes) {
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& v : videos) {
    const int observed = WindowSpec{alpha, 0.0}.observed_frames(v.length());
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    for (int t = std::max(observed, 0); t < v.length(); ++t) seen[static_cast<std::size_t>(v.labels[static_cast<std::size_t>(t)])] = true;
    for (int c = 0; c < classes; ++c) counts[static_cast<std::size_t>(c)] += seen[static_cast<std::size_t>(c)];
  }
  std::vector<int> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const int median = sorted[sorted.size() / 2];
  std::vector<bool> frequent(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) frequent[static_cast<std::size_t>(c)] = counts[static_cast<std::size_t>(c)] >= median;
  return frequent;
}

MetricsReport evaluate(const Model& model, const Dataset& data, const EvalConfig& config, int threads) {
  EvalOptions options;
  options.threads = threads;
  if (model.set_mode()) options.frequent = frequent_classes(data.train, config.alpha_set.front(), model.classes);
  return evaluate(model_predictor(model), data.test, model.classes, config, options);
}

}  // namespace tcca
