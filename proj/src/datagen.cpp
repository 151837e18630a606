#include "tcca/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tcca {

namespace fs = std::filesystem;
using nlohmann::json;

void GeneratorSpec::validate() const {
  if (classes < 2) throw InvalidArgument("generator needs at least 2 classes");
  if (gt_transitions.rows() != classes || gt_transitions.cols() != classes)
    throw InvalidArgument("gt_transitions must be C x C");
  for (int a = 0; a < classes; ++a) {
    if (gt_transitions(a, a) != 0.0) throw InvalidArgument("gt_transitions diagonal must be zero");
    if ((gt_transitions.row(a).array() < 0.0).any()) throw InvalidArgument("negative transition probability");
    if (std::abs(gt_transitions.row(a).sum() - 1.0) > 1e-9) throw InvalidArgument("gt_transitions rows must sum to 1");
  }
  if (static_cast<int>(duration_mean.size()) != classes || static_cast<int>(duration_std.size()) != classes)
    throw InvalidArgument("duration parameters must have one entry per class");
  for (double m : duration_mean)
    if (m < 2.0) throw InvalidArgument("duration means must be at least 2 frames");
  if (class_embeddings.rows() != classes || class_embeddings.cols() != feature_dim)
    throw InvalidArgument("class_embeddings must be C x D");
  if (min_segments < 1 || max_segments < min_segments) throw InvalidArgument("invalid segment count range");
  if (noise_sigma < 0.0) throw InvalidArgument("noise_sigma must be non-negative");
}

GeneratorSpec make_generator_spec(const GrammarRecipe& r) {
  GeneratorSpec spec;
  spec.classes = r.classes;
  spec.feature_dim = r.feature_dim;
  spec.noise_sigma = r.noise_sigma;
  spec.min_segments = r.min_segments;
  spec.max_segments = r.max_segments;
  spec.seed = r.seed;

  const int c = r.classes;
  if (c < 2) throw InvalidArgument("generator needs at least 2 classes");
  Rng rng(derive_seed(r.seed, 0xA11CE));

  // Preferred successor: a random derangement so nobody prefers itself.
  std::vector<int> succ(static_cast<std::size_t>(c));
  std::iota(succ.begin(), succ.end(), 0);
  for (bool ok = false; !ok;) {
    rng.shuffle(succ.begin(), succ.end());
    ok = true;
    for (int a = 0; a < c; ++a) ok = ok && succ[static_cast<std::size_t>(a)] != a;
  }
  spec.gt_transitions = Matrix::Zero(c, c);
  for (int a = 0; a < c; ++a) {
    const int pref = succ[static_cast<std::size_t>(a)];
    if (c == 2) {
      spec.gt_transitions(a, pref) = 1.0;
      continue;
    }
    const double rest = (1.0 - r.dominance) / (c - 2);
    for (int b = 0; b < c; ++b)
      if (b != a) spec.gt_transitions(a, b) = b == pref ? r.dominance : rest;
  }

  for (int a = 0; a < c; ++a) {
    const double mean = rng.uniform(r.duration_min, r.duration_max);
    spec.duration_mean.push_back(mean);
    spec.duration_std.push_back(r.duration_cv * mean);
  }

  // Orthonormal rows when C <= D, otherwise unit-norm rows.
  Matrix emb(c, r.feature_dim);
  for (int a = 0; a < c; ++a)
    for (int d = 0; d < r.feature_dim; ++d) emb(a, d) = rng.normal();
  for (int a = 0; a < c; ++a) {
    if (c <= r.feature_dim)
      for (int b = 0; b < a; ++b) emb.row(a) -= emb.row(a).dot(emb.row(b)) * emb.row(b);
    emb.row(a).normalize();
  }
  spec.class_embeddings = emb;
  spec.validate();
  return spec;
}

FrameSequence sample_video(const GeneratorSpec& spec, Rng& rng) {
  const int segments = rng.uniform_int(spec.min_segments, spec.max_segments);
  std::vector<int> actions;
  std::vector<int> durations;
  int action = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
  for (int s = 0; s < segments; ++s) {
    if (s > 0) {
      const double u = rng.uniform();
      double acc = 0.0;
      // Fallback for u landing past a cumulative sum that rounds below 1.
      int next = -1;
      for (int b = 0; b < spec.classes; ++b) {
        if (spec.gt_transitions(action, b) <= 0.0) continue;
        next = b;
        acc += spec.gt_transitions(action, b);
        if (u < acc) break;
      }
      action = next;
    }
    const auto a = static_cast<std::size_t>(action);
    const int d = std::max(2, static_cast<int>(std::lround(rng.normal(spec.duration_mean[a], spec.duration_std[a]))));
    actions.push_back(action);
    durations.push_back(d);
  }

  FrameSequence video;
  video.labels = segments_to_frames(SegmentSequence{actions, durations});
  video.features.resize(video.length(), spec.feature_dim);
  for (int t = 0; t < video.length(); ++t)
    for (int d = 0; d < spec.feature_dim; ++d)
      video.features(t, d) = spec.class_embeddings(video.labels[static_cast<std::size_t>(t)], d) +
                             (spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0);
  return video;
}

Dataset sample_dataset(const GeneratorSpec& spec, int n_train, int n_test) {
  if (n_train < 1 || n_test < 1) throw InvalidArgument("dataset splits must be non-empty");
  spec.validate();
  Dataset data;
  data.classes = spec.classes;
  data.feature_dim = spec.feature_dim;
  data.gt_transitions = spec.gt_transitions;
  for (int i = 0; i < n_train; ++i) {
    Rng rng(derive_seed(spec.seed, 1, static_cast<std::uint64_t>(i)));
    data.train.push_back(sample_video(spec, rng));
  }
  for (int i = 0; i < n_test; ++i) {
    Rng rng(derive_seed(spec.seed, 2, static_cast<std::uint64_t>(i)));
    data.test.push_back(sample_video(spec, rng));
  }
  return data;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_digest(const fs::path& stem) {
  fs::path feat = stem, lab = stem;
  feat += ".feat";
  lab += ".labels";
  return hex64(fnv1a64(slurp(lab), fnv1a64(slurp(feat))));
}

json write_split(const std::vector<FrameSequence>& videos, const fs::path& root, const std::string& split) {
  fs::create_directories(root / split);
  json entries = json::array();
  for (std::size_t i = 0; i < videos.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "vid_%04zu", i);
    const std::string rel = split + "/" + name;
    write_frame_sequence(videos[i], root / rel);
    entries.push_back({{"path", rel}, {"frames", videos[i].length()}, {"digest", file_digest(root / rel)}});
  }
  return entries;
}

}  // namespace

std::string write_dataset(const Dataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["classes"] = data.classes;
  manifest["feature_dim"] = data.feature_dim;
  json rows = json::array();
  for (Eigen::Index a = 0; a < data.gt_transitions.rows(); ++a)
    for (Eigen::Index b = 0; b < data.gt_transitions.cols(); ++b) rows.push_back(data.gt_transitions(a, b));
  manifest["gt_transitions"] = rows;
  manifest["train"] = write_split(data.train, dir, "train");
  manifest["test"] = write_split(data.test, dir, "test");

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  out.close();
  return manifest_hash(dir);
}

std::string manifest_hash(const fs::path& dir) { return hex64(fnv1a64(slurp(dir / "manifest.json"))); }

Dataset read_dataset(const fs::path& dir) {
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  Dataset data;
  data.classes = manifest.at("classes").get<int>();
  data.feature_dim = manifest.at("feature_dim").get<int>();
  const auto& rows = manifest.at("gt_transitions");
  if (rows.size() != static_cast<std::size_t>(data.classes * data.classes))
    throw InvalidArgument("manifest gt_transitions has wrong size");
  data.gt_transitions.resize(data.classes, data.classes);
  for (int a = 0; a < data.classes; ++a)
    for (int b = 0; b < data.classes; ++b)
      data.gt_transitions(a, b) = rows[static_cast<std::size_t>(a * data.classes + b)].get<double>();
  auto load = [&](const char* split, std::vector<FrameSequence>& out) {
    for (const auto& e : manifest.at(split)) {
      FrameSequence seq = read_frame_sequence(dir / e.at("path").get<std::string>());
      if (seq.dim() != data.feature_dim) throw InvalidArgument("feature dimension mismatch in dataset");
      seq.validate(data.classes);
      out.push_back(std::move(seq));
    }
  };
  load("train", data.train);
  load("test", data.test);
  return data;
}

}  // namespace tcca
