// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance [--cli path/to/tcca] [--only N,...] [--work dir]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tcca/checkpoint.hpp"
#include "tcca/evaluation.hpp"
#include "tcca/report.hpp"
#include "tcca/training.hpp"

namespace fs = std::filesystem;
using namespace tcca;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---- 1 ----------------------------------------------------------------

Outcome crf_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst_score = 0.0, worst_z = 0.0;
  int path_mismatch = 0, unique = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = rng.uniform_int(1, 6);
    const int labels = rng.uniform_int(1, 5);
    const Matrix e = oracle::random_matrix(rng, k, labels, 3.0);
    const Matrix m = oracle::random_transitions(rng, labels);
    const double omega = rng.uniform(0.0, 2.0);
    const oracle::BruteForce bf = oracle::brute_force_crf(e, m, omega);
    const ViterbiResult v = viterbi_decode(e, m, omega);
    worst_score = std::max(worst_score, std::abs(v.score - bf.max_score));
    if (bf.unique) {
      ++unique;
      path_mismatch += v.path != bf.argmax;
    }
    worst_z = std::max(worst_z, std::abs(crf_log_partition(e, m, omega) - bf.log_partition));
  }
  const double secs = seconds_since(t0);
  return {worst_score < 1e-9 && path_mismatch == 0 && worst_z < 1e-6 && secs < 30.0,
          "max |score diff| " + fmt("%.3g", worst_score) + ", path mismatches " + std::to_string(path_mismatch) + "/" +
              std::to_string(unique) + " unique, max |logZ diff| " + fmt("%.3g", worst_z) + ", " + fmt("%.2f", secs) +
              " s"};
}

// ---- 2 ----------------------------------------------------------------

RunConfig small_model_config() {
  RunConfig c;
  c.encoder.stages = 2;
  c.encoder.layers_per_stage = 1;
  c.encoder.heads = 1;
  c.encoder.hidden = 4;
  c.encoder.window = 4;
  c.encoder.global_stride = 2;
  c.encoder.dropout = 0.0;
  c.decoder.queries = 4;
  c.decoder.layers = 1;
  c.decoder.heads = 1;
  c.decoder.hidden = 4;
  c.decoder.dropout = 0.0;
  c.decoder.max_positions = 16;
  return c;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GrammarRecipe r;
  r.classes = 3;
  r.feature_dim = 4;
  r.duration_min = 3.0;
  r.duration_max = 5.0;
  r.min_segments = 4;
  r.max_segments = 5;
  const Dataset d = sample_dataset(make_generator_spec(r), 2, 1);
  RunConfig c = small_model_config();
  Model m = build_model(c, d.classes, d.feature_dim, target_corpus(d.train, c.train.alpha_set, c.decoder.queries));
  FrameSequence v = d.train[0];
  v.features.conservativeResize(12, Eigen::NoChange);
  v.labels.resize(12);
  const TrainingSample s = make_sample(v, 0.5, 1, c.decoder.queries, d.classes, nullptr);
  std::vector<int> all(static_cast<std::size_t>(m.store.size()));
  std::iota(all.begin(), all.end(), 0);

  auto forward = [&](ad::Tape& t) {
    const nn::Pass pass{t};
    std::vector<ad::Var> stages = m.encoder->forward(pass, t.constant(s.features));
    DecoderVars dec = m.decoder->forward(pass, build_seg_features(stages));
    return std::make_pair(std::move(stages), std::move(dec));
  };
  auto bacr = [&](ad::Tape& t, const std::vector<ad::Var>& stages, const DecoderVars& dec) {
    const ad::Var last = ad::slice_rows(stages.back(), stages.back().rows() - 1, 1);
    return loss_bacr(t, dec.a_fut, dec.a_past, dec.a_pres, last);
  };

  std::map<std::string, double> err;
  {
    ad::ParamStore crf_store;
    Rng rng(2);
    const int e = crf_store.add("emissions", oracle::random_matrix(rng, 4, 4, 2.0));
    const int tr = crf_store.add("transitions", oracle::random_transitions(rng, 4));
    crf_store.set_mask(tr, TransitionMatrix::learnable_mask(3));
    const std::vector<int> gold{2, 0, 3, 3};
    err["crf_nll"] = gradient_check(crf_store, {e, tr}, [&](ad::Tape& t) {
      return crf_nll(t.param(e), t.param(tr), gold, 1.0);
    });
  }
  err["L_seg"] = gradient_check(m.store, all, [&](ad::Tape& t) { return seg_loss(forward(t).first, s.observed_labels); });
  err["lambda*L_s"] = gradient_check(m.store, all, [&](ad::Tape& t) {
    return ad::scale(smooth_loss(t, forward(t).first), c.train.lambda);
  });
  err["L_dur"] = gradient_check(m.store, all, [&](ad::Tape& t) {
    return loss_duration(forward(t).second.d_hat, s.target_durations);
  });
  err["L_fut"] = gradient_check(m.store, all, [&](ad::Tape& t) {
    const auto [stages, dec] = forward(t);
    return bacr(t, stages, dec).future;
  });
  err["L_past"] = gradient_check(m.store, all, [&](ad::Tape& t) {
    const auto [stages, dec] = forward(t);
    return bacr(t, stages, dec).past;
  });
  err["total"] = gradient_check(m.store, all, [&](ad::Tape& t) { return total_loss(m, t, s).total; });

  bool ok = true;
  std::string detail;
  for (const auto& [name, e] : err) {
    ok = ok && e < 1e-4;
    detail += name + " " + fmt("%.2g", e) + ", ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, "max rel err: " + detail + fmt("%.1f", secs) + " s"};
}

// ---- 3 ----------------------------------------------------------------

Outcome degenerate_link() {
  Rng rng(3);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = rng.uniform_int(1, 8);
    const int labels = rng.uniform_int(1, 9);
    const Matrix e = oracle::random_matrix(rng, k, labels);
    const ViterbiResult v = viterbi_decode(e, oracle::random_transitions(rng, labels, 5.0), 0.0);
    std::vector<int> argmax;
    for (int i = 0; i < k; ++i) {
      Eigen::Index best;
      e.row(i).maxCoeff(&best);
      argmax.push_back(static_cast<int>(best));
    }
    mismatches += v.path != argmax;
  }
  return {mismatches == 0, std::to_string(mismatches) + "/1000 paths differ from per-position argmax"};
}

// ---- 4 ----------------------------------------------------------------

Outcome duration_contract() {
  Rng rng(4);
  double worst = 0.0;
  const RunConfig c = small_model_config();
  for (int draw = 0; draw < 1000; ++draw) {
    ad::ParamStore store;
    const Decoder dec(store, c.decoder, 6, 3, rng);
    const DecoderOutputs out = decode(dec, store, oracle::random_matrix(rng, rng.uniform_int(1, 20), 6, 3.0));
    worst = std::max(worst, std::abs(out.d_hat.sum() - 1.0));
  }
  int wrong_length = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const int n = rng.uniform_int(0, 10);
    const int horizon = rng.uniform_int(1, 400);
    std::vector<int> actions;
    std::vector<double> durations;
    for (int i = 0; i < n; ++i) {
      actions.push_back(static_cast<int>(rng.below(8)));
      durations.push_back(rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.0, 3.0));
    }
    wrong_length += decode_to_frames(actions, durations, horizon, 0).size() != static_cast<std::size_t>(horizon);
  }
  return {worst <= 1e-6 && wrong_length == 0,
          "max |sum d_hat - 1| " + fmt("%.3g", worst) + ", wrong-length expansions " + std::to_string(wrong_length) + "/1000"};
}

// ---- 5 ----------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(5);
  int edit_diff = 0, f1_diff = 0, ap_diff = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> a, b;
    const int na = rng.uniform_int(0, 12), nb = rng.uniform_int(0, 12);
    for (int i = 0; i < na; ++i) a.push_back(static_cast<int>(rng.below(4)));
    for (int i = 0; i < nb; ++i) b.push_back(static_cast<int>(rng.below(4)));
    edit_diff += edit_score(a, b) != oracle::edit_score(a, b);
  }
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(2, 40);
    const auto gt = track_to_spans(oracle::random_track_max_segments(rng, n, 3, 5));
    const auto pred = track_to_spans(oracle::random_track_max_segments(rng, n, 3, 5));
    bool same = true;
    for (double tau : {0.1, 0.25, 0.5}) same = same && f1_at(pred, gt, tau) == oracle::exhaustive_f1(pred, gt, tau);
    f1_diff += !same;
  }
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(1, 30);
    std::vector<double> scores;
    std::vector<bool> pos;
    for (int i = 0; i < n; ++i) {
      scores.push_back(static_cast<double>(rng.below(6)) / 5.0);
      pos.push_back(rng.uniform() < 0.4);
    }
    const auto ap = average_precision(scores, pos);
    const double ref = oracle::quadratic_ap(scores, pos);
    ap_diff += std::isnan(ref) ? ap.has_value() : (!ap || std::abs(*ap - ref) > 1e-12);
  }
  return {edit_diff == 0 && f1_diff == 0 && ap_diff == 0,
          "disagreements: edit " + std::to_string(edit_diff) + "/500, F1 " + std::to_string(f1_diff) + "/500, AP " +
              std::to_string(ap_diff) + "/500"};
}

// ---- 6, 7 -------------------------------------------------------------

struct Run {
  MetricsReport report;
  Matrix transitions;  // empty without CRF
  double seconds = 0.0;
};

Run train_and_evaluate(const RunConfig& config, const Dataset& data, const std::string& label) {
  const auto t0 = Clock::now();
  const TrainResult r = train(config, data);
  Run run;
  run.seconds = seconds_since(t0);
  run.report = evaluate(r.model, data, config.eval);
  if (r.model.has_crf()) run.transitions = r.model.transition_matrix();
  std::cerr << "  " << label << ": " << fmt("%.0f", run.seconds) << " s, MoC(0.3,0.5) "
            << fmt("%.4f", run.report.moc.at({0.3, 0.5})) << ", MoC(0.3,0.1) " << fmt("%.4f", run.report.moc.at({0.3, 0.1}))
            << ", mMoC " << fmt("%.4f", run.report.mean_moc()) << '\n';
  return run;
}

struct EndToEnd {
  Outcome six, seven;
};

EndToEnd end_to_end() {
  const RunConfig base;
  const Dataset data = sample_dataset(make_generator_spec(base.generator.grammar), base.generator.n_train,
                                      base.generator.n_test);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> full_05, full_01, nocrf_01, full_m, nobacr_m, slowest;
  std::vector<double> gt_agree, init_agree;

  std::vector<std::vector<int>> sequences;
  for (const auto& v : data.train) sequences.push_back(frames_to_segments(v.labels).actions);
  const Matrix counts = transition_counts(sequences, data.classes);
  std::vector<int> rows;
  for (int a = 0; a < data.classes; ++a)
    if (counts.row(a).sum() >= 20) rows.push_back(a);

  for (std::uint64_t seed : seeds) {
    RunConfig full = base;
    full.train.seed = seed;
    RunConfig nocrf = full;
    nocrf.train.use_crf = false;
    RunConfig nobacr = full;
    nobacr.train.use_bacr_fut = nobacr.train.use_bacr_past = false;
    RunConfig random_init = full;
    random_init.crf.init = CrfConfig::Init::random;

    const std::string s = " seed " + std::to_string(seed);
    const Run f = train_and_evaluate(full, data, "full" + s);
    const Run nc = train_and_evaluate(nocrf, data, "no CRF" + s);
    const Run nb = train_and_evaluate(nobacr, data, "no BACR" + s);
    const Run ri = train_and_evaluate(random_init, data, "random CRF init" + s);
    full_05.push_back(f.report.moc.at({0.3, 0.5}));
    full_01.push_back(f.report.moc.at({0.3, 0.1}));
    nocrf_01.push_back(nc.report.moc.at({0.3, 0.1}));
    full_m.push_back(f.report.mean_moc());
    nobacr_m.push_back(nb.report.mean_moc());
    slowest.push_back(std::max({f.seconds, nc.seconds, nb.seconds, ri.seconds}));

    const Matrix learned = exp_normalize_rows(f.transitions, data.classes);
    const Matrix learned_random = exp_normalize_rows(ri.transitions, data.classes);
    gt_agree.push_back(row_argmax_agreement(learned, data.gt_transitions, rows, data.classes));
    init_agree.push_back(row_argmax_agreement(learned, learned_random, rows, data.classes));
  }

  const double slow = *std::max_element(slowest.begin(), slowest.end());
  const bool a = median(full_05) >= 0.375;
  const bool b = median(full_01) >= median(nocrf_01);
  const bool c = median(full_m) >= median(nobacr_m);
  EndToEnd out;
  out.six = {a && b && c && slow < 900.0,
             std::string("(a) ") + (a ? "ok" : "FAIL") + " median MoC(0.3,0.5) " + fmt("%.4f", median(full_05)) +
                 " >= 0.375; (b) " + (b ? "ok" : "FAIL") + " median MoC(0.3,0.1) CRF " + fmt("%.4f", median(full_01)) +
                 " vs no CRF " + fmt("%.4f", median(nocrf_01)) + "; (c) " + (c ? "ok" : "FAIL") +
                 " median mMoC BACR " + fmt("%.4f", median(full_m)) + " vs none " + fmt("%.4f", median(nobacr_m)) +
                 "; slowest run " + fmt("%.0f", slow) + " s"};
  const double g = median(gt_agree), i = median(init_agree);
  out.seven = {g >= 0.7 && i >= 0.8, "median row-argmax agreement over " + std::to_string(rows.size()) +
                                         " rows: with generator " + fmt("%.3f", g) + " (>= 0.70), random vs precomputed init " +
                                         fmt("%.3f", i) + " (>= 0.80)"};
  return out;
}

// ---- 8 ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

Outcome determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no CLI path given (--cli)"};
  fs::remove_all(work);
  fs::create_directories(work);
  {
    // Full-size fixture, few epochs: byte identity does not depend on run length.
    std::ofstream cfg(work / "config.json");
    cfg << R"({"train":{"epochs":2,"seed":11}})";
  }
  const std::string c = (work / "config.json").string();
  std::vector<std::string> problems;
  for (const char* tag : {"a", "b"}) {
    const fs::path d = work / tag;
    if (run(cli + " gen --config " + c + " --out " + (d / "data").string()) != 0) problems.push_back("gen failed");
    if (run(cli + " train --config " + c + " --data " + (d / "data").string() + " --out " + (d / "run").string()) != 0)
      problems.push_back("train failed");
    if (run(cli + " eval --checkpoint " + (d / "run/model.ckpt").string() + " --data " + (d / "data").string() +
            " --out " + (d / "eval").string()) != 0)
      problems.push_back("eval failed");
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), work / "a");
    ++compared;
    if (slurp(entry.path()) != slurp(work / "b" / rel)) problems.push_back("differs: " + rel.string());
  }

  // in-process round trip
  const Checkpoint ck = load_checkpoint(work / "a/run/model.ckpt");
  const Dataset data = read_dataset(work / "a/data");
  const std::string via_cli = slurp(work / "a/eval/metrics.csv");
  const std::string reloaded = metrics_csv(evaluate(ck.model, data, ck.model.config.eval));
  save_checkpoint(work / "again.ckpt", ck.model, ck.optimizer, ck.data_signature, ck.epoch, ck.rng_state);
  if (slurp(work / "again.ckpt") != slurp(work / "a/run/model.ckpt")) problems.push_back("re-saved checkpoint differs");
  if (reloaded != via_cli) problems.push_back("evaluation after reload differs");

  std::string detail = std::to_string(compared) + " output files compared byte-for-byte across two runs";
  for (const auto& p : problems) detail += "; " + p;
  fs::remove_all(work);
  return {problems.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "tcca_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string n; std::getline(list, n, ',');) only.insert(std::stoi(n));
    } else {
      std::cerr << "usage: acceptance [--cli path] [--only N,...] [--work dir]\n";
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  const char* names[] = {"",
                         "CRF oracle equivalence",
                         "gradient suite",
                         "degenerate link (omega = 0)",
                         "duration contract",
                         "metric oracles",
                         "end-to-end synthetic training",
                         "transition recovery",
                         "determinism"};
  std::map<int, Outcome> results;
  auto record = [&](int n, Outcome o) {
    results[n] = o;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << names[n] << "): " << o.detail << std::endl;
  };

  if (wanted(1)) record(1, crf_oracle());
  if (wanted(2)) record(2, gradient_suite());
  if (wanted(3)) record(3, degenerate_link());
  if (wanted(4)) record(4, duration_contract());
  if (wanted(5)) record(5, metric_oracles());
  if (wanted(6) || wanted(7)) {
    const EndToEnd e = end_to_end();
    if (wanted(6)) record(6, e.six);
    if (wanted(7)) record(7, e.seven);
  }
  if (wanted(8)) record(8, determinism(cli, work));

  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.second.pass; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
