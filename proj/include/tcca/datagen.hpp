#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcca/core.hpp"
#include "tcca/rng.hpp"

namespace tcca {

// Fully materialized generator: the ground-truth grammar, duration model
// and class embeddings are explicit so trained models can be checked
// against them.
struct GeneratorSpec {
  int classes = 8;
  int feature_dim = 16;
  Matrix gt_transitions;              // C x C, row-stochastic, zero diagonal
  std::vector<double> duration_mean;  // per class, frames
  std::vector<double> duration_std;   // per class, frames
  double noise_sigma = 0.35;
  Matrix class_embeddings;  // C x D
  int min_segments = 7;
  int max_segments = 9;
  std::uint64_t seed = 7;

  void validate() const;
};

// Compact recipe from which a GeneratorSpec is built. This is what the run
// configuration file carries.
struct GrammarRecipe {
  int classes = 8;
  int feature_dim = 16;
  double dominance = 0.85;  // probability mass on each class's preferred successor
  double duration_min = 16.0;
  double duration_max = 34.0;
  double duration_cv = 0.2;  // stddev / mean
  double noise_sigma = 0.35;
  int min_segments = 7;
  int max_segments = 9;
  std::uint64_t seed = 7;
};

GeneratorSpec make_generator_spec(const GrammarRecipe& recipe);

FrameSequence sample_video(const GeneratorSpec& spec, Rng& rng);

struct Dataset {
  int classes = 0;
  int feature_dim = 0;
  Matrix gt_transitions;
  std::vector<FrameSequence> train;
  std::vector<FrameSequence> test;
};

// Train video i draws from stream (seed, 1, i) and test video i from
// (seed, 2, i), so the splits never share random state.
Dataset sample_dataset(const GeneratorSpec& spec, int n_train, int n_test);

// Writes <dir>/train/vid_XXXX.{feat,labels}, <dir>/test/... and
// <dir>/manifest.json. Returns the manifest hash (hex FNV-1a 64), which
// covers every file through the per-file digests listed in the manifest.
std::string write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);
std::string manifest_hash(const std::filesystem::path& dir);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace tcca
