#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tcca/core.hpp"

namespace tcca {

// Expands a predicted segment list into exactly `horizon` frames. Durations
// are renormalized over the given actions; segment i covers
// [round(h * D_{i-1}), round(h * D_i)) with D the cumulative fractions.
// With no actions the whole horizon takes `fallback`.
LabelTrack decode_to_frames(std::span<const int> actions, std::span<const double> durations, int horizon,
                            Label fallback);

// Mean over classes present in `gt` of per-class frame recall.
double moc(std::span<const int> pred, std::span<const int> gt, int classes);
double frame_acc(std::span<const int> pred, std::span<const int> gt);

// 1 - Levenshtein(pred, gt) / max(|pred|, |gt|); 1 when both are empty.
double edit_score(std::span<const int> pred, std::span<const int> gt);
std::size_t levenshtein(std::span<const int> a, std::span<const int> b);

struct Span {
  Label label;
  int begin;  // inclusive frame
  int end;    // exclusive frame
};

std::vector<Span> track_to_spans(std::span<const int> track);
double span_iou(const Span& a, const Span& b);

// Greedy segmental F1: each predicted segment, in temporal order, is a true
// positive when its best-IoU unmatched same-label ground-truth segment
// reaches `tau`.
double f1_at(std::span<const Span> pred, std::span<const Span> gt, double tau);

// Average precision of one class: precision at every positive, videos
// ranked by descending score with ties broken by lower video index.
// nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& positive);

struct MapResult {
  double all = 0.0;
  double freq = 0.0;
  double rare = 0.0;
};

// scores: videos x C. gt[v][c]: class c occurs in video v's future.
// frequent[c] splits classes into the Freq / Rare partitions. Classes with
// no positives are left out of every mean.
MapResult map_multilabel(const Matrix& scores, const std::vector<std::vector<bool>>& gt,
                         const std::vector<bool>& frequent);

struct SegmentationScores {
  double acc = 0.0;
  double edit = 0.0;
  double f1_10 = 0.0;
  double f1_25 = 0.0;
  double f1_50 = 0.0;
};

struct MetricsReport {
  std::map<std::pair<double, double>, double> moc;  // (alpha, beta) -> MoC
  std::map<double, SegmentationScores> segmentation;  // per alpha, encoder on observed frames
  std::optional<MapResult> map;  // set-prediction mode only

  double mean_moc() const;
};

}  // namespace tcca
