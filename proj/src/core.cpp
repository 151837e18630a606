#include "tcca/core.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace tcca {

namespace {

// Ratios such as 0.7 are not exact in binary; snap products within this
// distance of an integer before rounding so 0.7*10 gives 7, not 8.
constexpr double kRoundingSlack = 1e-9;

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InvalidArgument("truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void FrameSequence::validate(int classes) const {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw InvalidArgument("feature rows do not match label count");
  for (Label l : labels)
    if (l < 0 || l >= classes) throw InvalidArgument("label out of range");
}

int SegmentSequence::total_frames() const {
  return std::accumulate(durations.begin(), durations.end(), 0);
}

int WindowSpec::observed_frames(int total) const {
  return static_cast<int>(std::floor(alpha * total + kRoundingSlack));
}

int WindowSpec::future_frames(int total) const {
  return static_cast<int>(std::ceil(beta * total - kRoundingSlack));
}

bool WindowSpec::valid_for(int total) const {
  if (!(alpha > 0.0 && alpha < 1.0)) return false;
  if (!(beta > 0.0 && beta <= 1.0 - alpha + kRoundingSlack)) return false;
  const int obs = observed_frames(total);
  return obs >= 1 && obs + future_frames(total) <= total;
}

SegmentSequence frames_to_segments(std::span<const Label> labels) {
  if (labels.empty()) throw InvalidArgument("empty label track");
  SegmentSequence seq;
  for (Label l : labels) {
    if (!seq.actions.empty() && seq.actions.back() == l) {
      ++seq.durations.back();
    } else {
      seq.actions.push_back(l);
      seq.durations.push_back(1);
    }
  }
  return seq;
}

LabelTrack segments_to_frames(const SegmentSequence& seq) {
  if (seq.actions.size() != seq.durations.size())
    throw InvalidArgument("actions and durations differ in length");
  LabelTrack track;
  track.reserve(static_cast<std::size_t>(std::max(0, seq.total_frames())));
  for (std::size_t i = 0; i < seq.actions.size(); ++i) {
    if (seq.durations[i] <= 0) throw InvalidArgument("zero-length segment");
    track.insert(track.end(), static_cast<std::size_t>(seq.durations[i]), seq.actions[i]);
  }
  return track;
}

WindowSplit split_windows(const FrameSequence& sample, const WindowSpec& spec) {
  const int total = sample.length();
  if (!spec.valid_for(total)) throw InvalidArgument("invalid window");
  const int obs = spec.observed_frames(total);
  const int fut = spec.future_frames(total);

  WindowSplit split;
  split.observed.features = sample.features.topRows(obs);
  split.observed.labels.assign(sample.labels.begin(), sample.labels.begin() + obs);
  split.future_track.assign(sample.labels.begin() + obs, sample.labels.begin() + obs + fut);
  split.future = frames_to_segments(split.future_track);
  return split;
}

void write_frame_sequence(const FrameSequence& seq, const std::filesystem::path& stem) {
  std::filesystem::path feat = stem;
  feat += ".feat";
  std::ofstream out(feat, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + feat.string());
  write_u32_le(out, static_cast<std::uint32_t>(seq.features.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(seq.features.cols()));
  for (Eigen::Index t = 0; t < seq.features.rows(); ++t)
    for (Eigen::Index d = 0; d < seq.features.cols(); ++d)
      write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(seq.features(t, d))));
  if (!out) throw std::runtime_error("write failed for " + feat.string());

  std::filesystem::path lab = stem;
  lab += ".labels";
  std::ofstream lout(lab);
  if (!lout) throw std::runtime_error("cannot write " + lab.string());
  for (Label l : seq.labels) lout << l << '\n';
}

FrameSequence read_frame_sequence(const std::filesystem::path& stem) {
  std::filesystem::path feat = stem;
  feat += ".feat";
  std::ifstream in(feat, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + feat.string());
  const std::uint32_t frames = read_u32_le(in);
  const std::uint32_t dim = read_u32_le(in);
  FrameSequence seq;
  seq.features.resize(frames, dim);
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t d = 0; d < dim; ++d)
      seq.features(t, d) = std::bit_cast<float>(read_u32_le(in));

  std::filesystem::path lab = stem;
  lab += ".labels";
  std::ifstream lin(lab);
  if (!lin) throw InvalidArgument("cannot open " + lab.string());
  Label l;
  while (lin >> l) seq.labels.push_back(l);
  if (seq.labels.size() != frames) throw InvalidArgument("label count does not match features in " + stem.string());
  return seq;
}

}  // namespace tcca
