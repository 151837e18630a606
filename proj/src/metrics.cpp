#include "tcca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tcca {

LabelTrack decode_to_frames(std::span<const int> actions, std::span<const double> durations, int horizon,
                            Label fallback) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least one frame");
  if (actions.size() != durations.size()) throw InvalidArgument("actions and durations differ in length");
  if (actions.empty()) return LabelTrack(static_cast<std::size_t>(horizon), fallback);

  const double total = std::accumulate(durations.begin(), durations.end(), 0.0);
  LabelTrack track;
  track.reserve(static_cast<std::size_t>(horizon));
  double cumulative = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    cumulative += total > 0.0 ? durations[i] / total : 1.0 / static_cast<double>(actions.size());
    long boundary = i + 1 == actions.size() ? horizon : std::lround(horizon * cumulative);
    boundary = std::clamp(boundary, static_cast<long>(track.size()), static_cast<long>(horizon));
    track.resize(static_cast<std::size_t>(boundary), actions[i]);
  }
  return track;
}

double moc(std::span<const int> pred, std::span<const int> gt, int classes) {
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground truth differ in length");
  std::vector<int> total(static_cast<std::size_t>(classes), 0);
  std::vector<int> correct(static_cast<std::size_t>(classes), 0);
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (gt[t] < 0 || gt[t] >= classes) throw InvalidArgument("ground-truth label out of range");
    ++total[static_cast<std::size_t>(gt[t])];
    if (pred[t] == gt[t]) ++correct[static_cast<std::size_t>(gt[t])];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(correct[static_cast<std::size_t>(c)]) / total[static_cast<std::size_t>(c)];
    ++present;
  }
  return present == 0 ? 0.0 : sum / present;
}

double frame_acc(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground truth differ in length");
  if (gt.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) hits += pred[t] == gt[t];
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_score(std::span<const int> pred, std::span<const int> gt) {
  const std::size_t longest = std::max(pred.size(), gt.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(longest);
}

std::vector<Span> track_to_spans(std::span<const int> track) {
  std::vector<Span> spans;
  for (int t = 0; t < static_cast<int>(track.size()); ++t) {
    if (!spans.empty() && spans.back().label == track[static_cast<std::size_t>(t)])
      spans.back().end = t + 1;
    else
      spans.push_back({track[static_cast<std::size_t>(t)], t, t + 1});
  }
  return spans;
}

double span_iou(const Span& a, const Span& b) {
  const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.begin, b.begin));
  const int uni = std::max(a.end, b.end) - std::min(a.begin, b.begin);
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

double f1_at(std::span<const Span> pred, std::span<const Span> gt, double tau) {
  std::vector<bool> matched(gt.size(), false);
  int tp = 0;
  for (const Span& p : pred) {
    double best = -1.0;
    std::size_t best_j = gt.size();
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (matched[j] || gt[j].label != p.label) continue;
      const double iou = span_iou(p, gt[j]);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < gt.size() && best >= tau) {
      matched[best_j] = true;
      ++tp;
    }
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!positive[order[rank]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / hits;
}

MapResult map_multilabel(const Matrix& scores, const std::vector<std::vector<bool>>& gt,
                         const std::vector<bool>& frequent) {
  const auto videos = static_cast<std::size_t>(scores.rows());
  const auto classes = static_cast<std::size_t>(scores.cols());
  if (gt.size() != videos || frequent.size() != classes) throw InvalidArgument("mAP input shapes disagree");
  double all = 0.0, freq = 0.0, rare = 0.0;
  int n_all = 0, n_freq = 0, n_rare = 0;
  std::vector<double> column(videos);
  std::vector<bool> positive(videos);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t v = 0; v < videos; ++v) {
      if (gt[v].size() != classes) throw InvalidArgument("mAP ground-truth width mismatch");
      column[v] = scores(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
      positive[v] = gt[v][c];
    }
    const auto ap = average_precision(column, positive);
    if (!ap) continue;
    all += *ap;
    ++n_all;
    if (frequent[c]) {
      freq += *ap;
      ++n_freq;
    } else {
      rare += *ap;
      ++n_rare;
    }
  }
  return {n_all ? all / n_all : 0.0, n_freq ? freq / n_freq : 0.0, n_rare ? rare / n_rare : 0.0};
}

double MetricsReport::mean_moc() const {
  if (moc.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [key, v] : moc) s += v;
  return s / static_cast<double>(moc.size());
}

}  // namespace tcca
