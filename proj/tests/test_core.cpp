#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tcca/core.hpp"

using namespace tcca;

namespace {

constexpr int A = 0, B = 1, C = 2;

FrameSequence track_only(LabelTrack labels) {
  FrameSequence s;
  s.features = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 1);
  s.labels = std::move(labels);
  return s;
}

}  // namespace

TEST_CASE("frames_to_segments run-length encodes") {
  const LabelTrack t{A, A, B, B, B};
  const SegmentSequence s = frames_to_segments(t);
  CHECK(s.actions == std::vector<int>{A, B});
  CHECK(s.durations == std::vector<int>{2, 3});

  const LabelTrack one{A};
  const SegmentSequence s1 = frames_to_segments(one);
  CHECK(s1.actions == std::vector<int>{A});
  CHECK(s1.durations == std::vector<int>{1});
}

TEST_CASE("frames_to_segments rejects an empty track") {
  CHECK_THROWS_WITH_AS(frames_to_segments(LabelTrack{}), "empty label track", InvalidArgument);
}

TEST_CASE("segments_to_frames expands") {
  CHECK(segments_to_frames({{A, B}, {2, 1}}) == LabelTrack{A, A, B});
  CHECK(segments_to_frames({{A}, {4}}) == LabelTrack{A, A, A, A});
  CHECK_THROWS_WITH_AS(segments_to_frames({{A, B}, {2, 0}}), "zero-length segment", InvalidArgument);
}

TEST_CASE("segment round trip over random tracks") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const LabelTrack t = oracle::random_track(rng, 200, 5);
    const SegmentSequence s = frames_to_segments(t);
    REQUIRE(segments_to_frames(s) == t);
    CHECK(s.total_frames() == 200);
    for (std::size_t k = 1; k < s.actions.size(); ++k) CHECK(s.actions[k] != s.actions[k - 1]);
    // and the other direction
    const SegmentSequence again = frames_to_segments(segments_to_frames(s));
    CHECK(again.actions == s.actions);
    CHECK(again.durations == s.durations);
  }
}

TEST_CASE("split_windows index arithmetic") {
  FrameSequence ten = track_only(LabelTrack(10, A));
  for (int t = 0; t < 10; ++t) ten.features(t, 0) = t;

  WindowSplit s = split_windows(ten, {0.2, 0.5});
  CHECK(s.observed.length() == 2);
  CHECK(s.future_track.size() == 5);
  CHECK(s.observed.features(1, 0) == 1.0);

  s = split_windows(ten, {0.3, 0.7});
  CHECK(s.observed.length() == 3);
  CHECK(s.future_track.size() == 7);
}

TEST_CASE("split_windows truncates straddling segments") {
  const FrameSequence seq = track_only({A, A, A, B, B, C, C, C, C, C});
  const WindowSplit s = split_windows(seq, {0.2, 0.5});
  CHECK(s.future.actions == std::vector<int>{A, B, C});
  CHECK(s.future.durations == std::vector<int>{1, 2, 2});
}

TEST_CASE("split_windows rejects invalid windows") {
  const FrameSequence seq = track_only(LabelTrack(10, A));
  CHECK_THROWS_WITH_AS(split_windows(seq, {0.05, 0.5}), "invalid window", InvalidArgument);  // no observed frame
  CHECK_THROWS_WITH_AS(split_windows(seq, {0.5, 0.6}), "invalid window", InvalidArgument);
  CHECK_THROWS_WITH_AS(split_windows(seq, {0.0, 0.5}), "invalid window", InvalidArgument);
  CHECK_THROWS_WITH_AS(split_windows(seq, {0.3, 0.0}), "invalid window", InvalidArgument);
}

TEST_CASE("split_windows partitions a contiguous prefix") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const int total = rng.uniform_int(2, 300);
    const double alpha = rng.uniform(0.01, 0.95);
    const double beta = rng.uniform(0.01, 1.0 - alpha);
    const WindowSpec spec{alpha, beta};
    if (!spec.valid_for(total)) continue;
    FrameSequence seq = track_only(oracle::random_track(rng, total, 4));
    for (int t = 0; t < total; ++t) seq.features(t, 0) = t;
    const WindowSplit s = split_windows(seq, spec);
    const int obs = s.observed.length();
    const int fut = static_cast<int>(s.future_track.size());
    CHECK(obs == static_cast<int>(std::floor(alpha * total + 1e-9)));
    CHECK(fut >= 1);
    CHECK(obs + fut <= total);
    CHECK(s.observed.features(obs - 1, 0) == obs - 1);
    CHECK(std::equal(s.future_track.begin(), s.future_track.end(), seq.labels.begin() + obs));
    CHECK(s.future.total_frames() == fut);
  }
}

TEST_CASE("frame sequence file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "tcca_core_io";
  std::filesystem::create_directories(dir);
  FrameSequence seq;
  seq.features.resize(3, 2);
  seq.features << 0.5, -1.25, 3.0, 4.0, 1e-3, -7.5;
  seq.labels = {0, 2, 1};
  write_frame_sequence(seq, dir / "v");

  std::ifstream raw(dir / "v.feat", std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(raw), std::istreambuf_iterator<char>()};
  REQUIRE(bytes.size() == 8 + 3 * 2 * 4);
  CHECK(bytes[0] == 3);
  CHECK(bytes[4] == 2);

  const FrameSequence back = read_frame_sequence(dir / "v");
  CHECK(back.labels == seq.labels);
  CHECK((back.features - seq.features.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame sequence validation") {
  FrameSequence seq = track_only({0, 1, 2});
  CHECK_NOTHROW(seq.validate(3));
  CHECK_THROWS_AS(seq.validate(2), InvalidArgument);
  seq.labels.pop_back();
  CHECK_THROWS_AS(seq.validate(3), InvalidArgument);
}

TEST_CASE("label space layout") {
  const LabelSpace ls{8};
  CHECK(ls.eos() == 8);
  CHECK(ls.start() == 9);
  CHECK(ls.end() == 10);
  CHECK(ls.decoder_size() == 9);
  CHECK(ls.augmented_size() == 11);
}
