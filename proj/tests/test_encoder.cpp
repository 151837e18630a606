#include <doctest.h>

#include "oracles.hpp"
#include "tcca/encoder.hpp"
#include "tcca/training.hpp"

using namespace tcca;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.stages = 2;
  c.layers_per_stage = 1;
  c.heads = 2;
  c.hidden = 8;
  c.window = 4;
  c.global_stride = 3;
  c.dropout = 0.0;
  return c;
}

StageLogits wrap(std::initializer_list<Matrix> stages) {
  StageLogits s;
  for (const Matrix& m : stages) s.stages.push_back(m);
  return s;
}

// Direct evaluation of the truncated smoothing loss.
double smooth_reference(const StageLogits& logits, double tau) {
  double total = 0.0;
  for (const Matrix& z : logits.stages) {
    Matrix logp(z.rows(), z.cols());
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
      double norm = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) norm += std::exp(z(t, c));
      for (Eigen::Index c = 0; c < z.cols(); ++c) logp(t, c) = z(t, c) - std::log(norm);
    }
    double s = 0.0;
    for (Eigen::Index t = 1; t < z.rows(); ++t)
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double d = std::min(std::abs(logp(t, c) - logp(t - 1, c)), tau);
        s += d * d;
      }
    total += s / static_cast<double>((z.rows() - 1) * z.cols());
  }
  return total / static_cast<double>(logits.stages.size());
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.hidden = 7;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config();
  c.window = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config();
  c.stages = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("single observed frame") {
  ad::ParamStore store;
  Rng rng(1);
  const Encoder enc(store, small_config(), 5, 3, rng);
  const StageLogits out = encode(enc, store, oracle::random_matrix(rng, 1, 5));
  CHECK(out.stage_count() == 2);
  CHECK(out.frames() == 1);
  CHECK(out.classes() == 3);
}

TEST_CASE("zero parameters leave only the output bias") {
  ad::ParamStore store;
  Rng rng(2);
  const Encoder enc(store, small_config(), 5, 3, rng);
  RowVector b(3);
  b << 0.5, -1.0, 2.0;
  for (int id = 0; id < store.size(); ++id) {
    const std::string& name = store.name(id);
    store.value(id).setZero();
    if (name.size() > 9 && name.compare(name.size() - 9, 9, ".out.bias") == 0 && name.find(".layer") == std::string::npos)
      store.value(id) = b;
  }
  const StageLogits out = encode(enc, store, oracle::random_matrix(rng, 7, 5));
  for (const Matrix& s : out.stages)
    for (Eigen::Index t = 0; t < s.rows(); ++t) CHECK(s.row(t) == b);
}

TEST_CASE("random parameter draws give finite logits of the right shape") {
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    ad::ParamStore store;
    Rng rng(draw);
    const Encoder enc(store, small_config(), 4, 3, rng);
    const StageLogits out = encode(enc, store, oracle::random_matrix(rng, 16, 4, 2.0));
    REQUIRE(out.stage_count() == 2);
    CHECK(out.frames() == 16);
    CHECK(out.classes() == 3);
    for (const Matrix& s : out.stages) CHECK(s.allFinite());
  }
}

TEST_CASE("non-finite features are rejected") {
  ad::ParamStore store;
  Rng rng(3);
  const Encoder enc(store, small_config(), 2, 3, rng);
  Matrix f = Matrix::Zero(4, 2);
  f(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(encode(enc, store, f), "non-finite features", InvalidArgument);
}

TEST_CASE("seg_loss examples") {
  const std::vector<int> labels{0, 2, 1};
  Matrix saturated = Matrix::Zero(3, 3);
  for (int t = 0; t < 3; ++t) saturated(t, labels[static_cast<std::size_t>(t)]) = 1e4;
  CHECK(seg_loss(wrap({saturated, saturated}), labels) < 1e-3);

  const std::vector<int> four{0, 3};
  CHECK(seg_loss(wrap({Matrix::Zero(2, 4)}), four) == doctest::Approx(std::log(4.0)));

  Rng rng(4);
  const Matrix s1 = oracle::random_matrix(rng, 3, 3, 2.0), s2 = oracle::random_matrix(rng, 3, 3, 2.0);
  const double l1 = seg_loss(wrap({s1}), labels), l2 = seg_loss(wrap({s2}), labels);
  CHECK(seg_loss(wrap({s1, s2}), labels) == doctest::Approx((l1 + l2) / 2.0).epsilon(1e-14));

  const std::vector<int> bad{0, 3, 1};
  CHECK_THROWS_AS(seg_loss(wrap({s1}), bad), InvalidArgument);
}

TEST_CASE("smooth_loss examples") {
  Matrix constant(5, 3);
  constant.rowwise() = RowVector::LinSpaced(3, -1.0, 1.0);
  CHECK(smooth_loss(wrap({constant})) == 0.0);
  CHECK(smooth_loss(wrap({Matrix::Zero(1, 3)})) == 0.0);

  // every class moves by at least tau in log-probability
  Matrix extreme(2, 2);
  extreme << 50, -50, -50, 50;
  CHECK(smooth_loss(wrap({extreme})) == doctest::Approx(16.0));

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const StageLogits l = wrap({oracle::random_matrix(rng, 6, 4, 5.0), oracle::random_matrix(rng, 6, 4, 5.0)});
    CHECK(std::abs(smooth_loss(l) - smooth_reference(l, kSmoothTruncation)) < 1e-9);
  }
}

TEST_CASE("smooth_loss under per-frame logit shifts") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = oracle::random_matrix(rng, 8, 3, 3.0);
    Matrix shifted = z;
    for (Eigen::Index t = 0; t < z.rows(); ++t) shifted.row(t).array() += rng.uniform(-10.0, 10.0);
    const StageLogits a = wrap({z}), b = wrap({shifted});
    CHECK(smooth_loss(b) == doctest::Approx(smooth_reference(b, kSmoothTruncation)).epsilon(1e-12));
    CHECK(smooth_loss(a) == doctest::Approx(smooth_loss(b)).epsilon(1e-9));
  }
}

TEST_CASE("build_seg_features layout") {
  Rng rng(7);
  const Matrix s1 = oracle::random_matrix(rng, 4, 3), s2 = oracle::random_matrix(rng, 4, 3);
  CHECK(build_seg_features(wrap({s1})).f_seg == s1);
  const Matrix f = build_seg_features(wrap({s1, s2})).f_seg;
  REQUIRE(f.cols() == 6);
  CHECK(f.leftCols(3) == s1);
  CHECK(f.rightCols(3) == s2);
}

TEST_CASE("seg plus smoothing gradient matches finite differences on ten frames") {
  ad::ParamStore store;
  Rng rng(8);
  const Encoder enc(store, small_config(), 4, 3, rng);
  const Matrix features = oracle::random_matrix(rng, 10, 4);
  const std::vector<int> labels{0, 0, 1, 1, 1, 2, 2, 0, 0, 1};
  std::vector<int> ids(static_cast<std::size_t>(store.size()));
  std::iota(ids.begin(), ids.end(), 0);
  const double err = gradient_check(store, ids, [&](ad::Tape& t) {
    const nn::Pass pass{t};
    const std::vector<ad::Var> logits = enc.forward(pass, t.constant(features));
    return ad::add(seg_loss(logits, labels), ad::scale(smooth_loss(t, logits), 0.2));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("videos are encoded independently of their order") {
  ad::ParamStore store;
  Rng rng(9);
  const Encoder enc(store, small_config(), 4, 3, rng);
  std::vector<Matrix> videos;
  for (int v = 0; v < 4; ++v) videos.push_back(oracle::random_matrix(rng, 5 + v, 4));
  std::vector<StageLogits> forward, backward(videos.size());
  for (const Matrix& v : videos) forward.push_back(encode(enc, store, v));
  for (std::size_t i = videos.size(); i-- > 0;) backward[i] = encode(enc, store, videos[i]);
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (int s = 0; s < 2; ++s) CHECK(forward[i].stages[static_cast<std::size_t>(s)] == backward[i].stages[static_cast<std::size_t>(s)]);
}
