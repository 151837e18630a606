#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tcca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Label = int;
using LabelTrack = std::vector<Label>;

// Raised when an operation's inputs violate its contract.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Label space sizes. Frame tracks use [0, C); the decoder and CRF add
// EOS = C, and the CRF transition matrix further adds START and END.
struct LabelSpace {
  int classes = 0;

  int eos() const { return classes; }
  int start() const { return classes + 1; }
  int end() const { return classes + 2; }
  int decoder_size() const { return classes + 1; }
  int augmented_size() const { return classes + 3; }
};

struct FrameSequence {
  Matrix features;  // T x D
  LabelTrack labels;

  int length() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }

  // Throws InvalidArgument unless rows match labels and every label is in [0, classes).
  void validate(int classes) const;
};

struct SegmentSequence {
  std::vector<Label> actions;
  std::vector<int> durations;

  int size() const { return static_cast<int>(actions.size()); }
  int total_frames() const;
};

struct WindowSpec {
  double alpha = 0.3;
  double beta = 0.5;

  int observed_frames(int total) const;
  int future_frames(int total) const;
  bool valid_for(int total) const;
};

struct WindowSplit {
  FrameSequence observed;
  SegmentSequence future;
  LabelTrack future_track;
};

SegmentSequence frames_to_segments(std::span<const Label> labels);
LabelTrack segments_to_frames(const SegmentSequence& seq);

// Observed prefix is floor(alpha*T) frames, the future is the next
// ceil(beta*T) frames. A segment crossing either boundary is cut there.
WindowSplit split_windows(const FrameSequence& sample, const WindowSpec& spec);

// Per-video file pair: <stem>.feat holds a little-endian header (u32 T, u32 D)
// followed by T*D float32 values row-major; <stem>.labels holds one integer per line.
void write_frame_sequence(const FrameSequence& seq, const std::filesystem::path& stem);
FrameSequence read_frame_sequence(const std::filesystem::path& stem);

}  // namespace tcca
