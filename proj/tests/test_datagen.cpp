#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "tcca/config.hpp"
#include "tcca/datagen.hpp"

using namespace tcca;

namespace {

// Manifest hash of the default configuration's dataset (300 train / 60 test).
constexpr const char* kFixtureManifestHash = "4f915987799b9a77";

GeneratorSpec two_class_spec() {
  GrammarRecipe r;
  r.classes = 2;
  r.feature_dim = 4;
  return make_generator_spec(r);
}

}  // namespace

TEST_CASE("two classes alternate strictly") {
  const GeneratorSpec spec = two_class_spec();
  CHECK(spec.gt_transitions(0, 1) == 1.0);
  CHECK(spec.gt_transitions(1, 0) == 1.0);
  Rng rng(5);
  for (int v = 0; v < 50; ++v) {
    const SegmentSequence s = frames_to_segments(sample_video(spec, rng).labels);
    for (std::size_t i = 1; i < s.actions.size(); ++i) CHECK(s.actions[i] == 1 - s.actions[i - 1]);
  }
}

TEST_CASE("zero noise reproduces the class embeddings") {
  GrammarRecipe r;
  r.noise_sigma = 0.0;
  const GeneratorSpec spec = make_generator_spec(r);
  Rng rng(9);
  const FrameSequence v = sample_video(spec, rng);
  for (int t = 0; t < v.length(); ++t)
    CHECK(v.features.row(t) == spec.class_embeddings.row(v.labels[static_cast<std::size_t>(t)]));
}

TEST_CASE("generator spec invariants") {
  const GeneratorSpec spec = make_generator_spec(GrammarRecipe{});
  CHECK_NOTHROW(spec.validate());
  for (int a = 0; a < spec.classes; ++a) {
    CHECK(spec.gt_transitions(a, a) == 0.0);
    CHECK(std::abs(spec.gt_transitions.row(a).sum() - 1.0) < 1e-9);
    CHECK(spec.duration_mean[static_cast<std::size_t>(a)] >= 2.0);
  }
  // C <= D: embeddings are orthonormal
  const Matrix gram = spec.class_embeddings * spec.class_embeddings.transpose();
  CHECK((gram - Matrix::Identity(spec.classes, spec.classes)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("segment counts stay in range and segments never repeat a label") {
  const GeneratorSpec spec = make_generator_spec(GrammarRecipe{});
  Rng rng(1);
  for (int v = 0; v < 200; ++v) {
    const SegmentSequence s = frames_to_segments(sample_video(spec, rng).labels);
    CHECK(s.size() >= spec.min_segments);
    CHECK(s.size() <= spec.max_segments);
    for (int d : s.durations) CHECK(d >= 2);
  }
}

TEST_CASE("empirical transitions converge to the grammar") {
  const GeneratorSpec spec = make_generator_spec(GrammarRecipe{});
  Matrix counts = Matrix::Zero(spec.classes, spec.classes);
  Rng rng(2024);
  // 10000 outgoing transitions from every row
  while (counts.rowwise().sum().minCoeff() < 10000) {
    const SegmentSequence s = frames_to_segments(sample_video(spec, rng).labels);
    for (std::size_t i = 1; i < s.actions.size(); ++i) counts(s.actions[i - 1], s.actions[i]) += 1.0;
  }
  for (int a = 0; a < spec.classes; ++a) {
    const RowVector empirical = counts.row(a) / counts.row(a).sum();
    CHECK((empirical - spec.gt_transitions.row(a)).cwiseAbs().sum() < 0.05);
  }
}

TEST_CASE("per-class mean durations match the duration model") {
  const GeneratorSpec spec = make_generator_spec(GrammarRecipe{});
  std::vector<double> sum(static_cast<std::size_t>(spec.classes), 0.0);
  std::vector<int> n(static_cast<std::size_t>(spec.classes), 0);
  Rng rng(77);
  auto enough = [&] { return *std::min_element(n.begin(), n.end()) >= 1000; };
  while (!enough()) {
    const SegmentSequence s = frames_to_segments(sample_video(spec, rng).labels);
    for (int i = 0; i < s.size(); ++i) {
      sum[static_cast<std::size_t>(s.actions[static_cast<std::size_t>(i)])] += s.durations[static_cast<std::size_t>(i)];
      ++n[static_cast<std::size_t>(s.actions[static_cast<std::size_t>(i)])];
    }
  }
  for (int c = 0; c < spec.classes; ++c) {
    const double mean = sum[static_cast<std::size_t>(c)] / n[static_cast<std::size_t>(c)];
    CHECK(std::abs(mean - spec.duration_mean[static_cast<std::size_t>(c)]) < 0.1 * spec.duration_mean[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("datasets are deterministic per seed") {
  const GeneratorSpec spec = make_generator_spec(GrammarRecipe{});
  const Dataset a = sample_dataset(spec, 5, 3);
  const Dataset b = sample_dataset(spec, 5, 3);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].labels == b.train[i].labels);
    CHECK(a.train[i].features == b.train[i].features);
  }
  GrammarRecipe other;
  other.seed = 8;
  const Dataset c = sample_dataset(make_generator_spec(other), 5, 3);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) differs = differs || a.train[i].labels != c.train[i].labels;
  CHECK(differs);
  // train and test streams are disjoint
  CHECK(a.train[0].labels != a.test[0].labels);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "tcca_datagen_rt";
  std::filesystem::remove_all(dir);
  const Dataset data = sample_dataset(make_generator_spec(GrammarRecipe{}), 4, 2);
  const std::string h1 = write_dataset(data, dir);
  CHECK(h1 == manifest_hash(dir));
  const Dataset back = read_dataset(dir);
  CHECK(back.classes == data.classes);
  CHECK(back.gt_transitions == data.gt_transitions);
  REQUIRE(back.train.size() == 4);
  REQUIRE(back.test.size() == 2);
  CHECK(back.train[3].labels == data.train[3].labels);
  CHECK((back.train[3].features - data.train[3].features).cwiseAbs().maxCoeff() < 1e-6);
  // writing again gives the same hash
  CHECK(write_dataset(data, dir) == h1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("default fixture matches its pinned hash") {
  const RunConfig config;
  const GeneratorSpec spec = make_generator_spec(config.generator.grammar);
  const Dataset data = sample_dataset(spec, config.generator.n_train, config.generator.n_test);
  CHECK(data.train.size() == 300);
  CHECK(data.test.size() == 60);
  CHECK(data.classes == 8);
  CHECK(data.feature_dim == 16);
  double frames = 0;
  for (const auto& v : data.train) frames += v.length();
  const double mean_frames = frames / static_cast<double>(data.train.size());
  CHECK(mean_frames > 170);
  CHECK(mean_frames < 230);

  const auto dir = std::filesystem::temp_directory_path() / "tcca_fixture";
  std::filesystem::remove_all(dir);
  const std::string hash = write_dataset(data, dir);
  MESSAGE("fixture manifest hash " << hash);
  CHECK(hash == kFixtureManifestHash);
  std::filesystem::remove_all(dir);
}
