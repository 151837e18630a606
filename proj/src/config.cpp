#include "tcca/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tcca {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    doc_ = &doc;
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_->contains(key)) return;
    try {
      out = doc_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return doc_->contains(key) ? &doc_->at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : doc_->items())
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json* doc_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

DurationMode parse_duration_mode(const std::string& s) {
  if (s == "dependent") return DurationMode::dependent;
  if (s == "independent") return DurationMode::independent;
  throw ConfigError("duration_mode must be 'dependent' or 'independent'");
}

CrfConfig::Init parse_init(const std::string& s) {
  if (s == "random") return CrfConfig::Init::random;
  if (s == "precomputed") return CrfConfig::Init::precomputed;
  throw ConfigError("init_mode must be 'random' or 'precomputed'");
}

const std::map<std::string, std::string>& toggle_paths() {
  static const std::map<std::string, std::string> paths{
      {"use_seg", "/train/use_seg"},
      {"use_smooth", "/train/use_smooth"},
      {"use_duration", "/train/use_duration"},
      {"use_bacr_fut", "/train/use_bacr_fut"},
      {"use_bacr_past", "/train/use_bacr_past"},
      {"use_crf", "/train/use_crf"},
      {"lambda", "/train/lambda"},
      {"seed", "/train/seed"},
      {"epochs", "/train/epochs"},
      {"omega", "/crf/omega"},
      {"crf_init", "/crf/init_mode"},
      {"duration_mode", "/decoder/duration_mode"},
      {"K", "/decoder/queries"},
      {"stages", "/encoder/stages"},
  };
  return paths;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("train.lambda must be non-negative");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (sample_rate < 1) throw ConfigError("train.sample_rate must be at least 1");
  if (alpha_set.empty()) throw ConfigError("train.alpha_set must not be empty");
  for (double a : alpha_set)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("train.alpha_set entries must lie in (0, 1)");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
}

void RunConfig::validate() const {
  try {
    encoder.validate();
    decoder.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (generator.n_train < 1 || generator.n_test < 1) throw ConfigError("generator split sizes must be positive");
  if (generator.grammar.classes < 2) throw ConfigError("generator.classes must be at least 2");
  if (!std::isfinite(crf.omega) || crf.omega < 0.0) throw ConfigError("crf.omega must be finite and non-negative");
  if (eval.alpha_set.empty() || eval.beta_set.empty()) throw ConfigError("eval alpha_set and beta_set must not be empty");
  for (double a : eval.alpha_set)
    for (double b : eval.beta_set)
      if (!(a > 0.0 && a < 1.0 && b > 0.0 && a + b <= 1.0 + 1e-9))
        throw ConfigError("eval windows need 0 < alpha < 1 and 0 < beta <= 1 - alpha");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  Section root(doc, "config");
  if (const json* g = root.sub("generator")) {
    Section s(*g, "generator");
    auto& r = c.generator.grammar;
    s.get("classes", r.classes);
    s.get("feature_dim", r.feature_dim);
    s.get("dominance", r.dominance);
    s.get("duration_min", r.duration_min);
    s.get("duration_max", r.duration_max);
    s.get("duration_cv", r.duration_cv);
    s.get("noise_sigma", r.noise_sigma);
    s.get("min_segments", r.min_segments);
    s.get("max_segments", r.max_segments);
    s.get("seed", r.seed);
    s.get("n_train", c.generator.n_train);
    s.get("n_test", c.generator.n_test);
    s.finish();
  }
  if (const json* e = root.sub("encoder")) {
    Section s(*e, "encoder");
    s.get("stages", c.encoder.stages);
    s.get("layers_per_stage", c.encoder.layers_per_stage);
    s.get("heads", c.encoder.heads);
    s.get("hidden", c.encoder.hidden);
    s.get("window", c.encoder.window);
    s.get("global_stride", c.encoder.global_stride);
    s.get("dropout", c.encoder.dropout);
    s.finish();
  }
  if (const json* d = root.sub("decoder")) {
    Section s(*d, "decoder");
    s.get("queries", c.decoder.queries);
    s.get("layers", c.decoder.layers);
    s.get("heads", c.decoder.heads);
    s.get("hidden", c.decoder.hidden);
    s.get("dropout", c.decoder.dropout);
    s.get("max_positions", c.decoder.max_positions);
    std::string mode = c.decoder.duration_mode == DurationMode::dependent ? "dependent" : "independent";
    s.get("duration_mode", mode);
    c.decoder.duration_mode = parse_duration_mode(mode);
    s.get("set_head", c.decoder.set_head);
    s.finish();
  }
  if (const json* r = root.sub("crf")) {
    Section s(*r, "crf");
    s.get("omega", c.crf.omega);
    std::string init = c.crf.init == CrfConfig::Init::random ? "random" : "precomputed";
    s.get("init_mode", init);
    c.crf.init = parse_init(init);
    s.finish();
  }
  if (const json* t = root.sub("train")) {
    Section s(*t, "train");
    auto& tc = c.train;
    s.get("lambda", tc.lambda);
    s.get("epochs", tc.epochs);
    s.get("batch_size", tc.batch_size);
    s.get("learning_rate", tc.learning_rate);
    s.get("warmup_epochs", tc.warmup_epochs);
    s.get("weight_decay", tc.weight_decay);
    s.get("sample_rate", tc.sample_rate);
    s.get("alpha_set", tc.alpha_set);
    s.get("seed", tc.seed);
    s.get("grad_clip", tc.grad_clip);
    s.get("use_seg", tc.use_seg);
    s.get("use_smooth", tc.use_smooth);
    s.get("use_duration", tc.use_duration);
    s.get("use_bacr_fut", tc.use_bacr_fut);
    s.get("use_bacr_past", tc.use_bacr_past);
    s.get("use_crf", tc.use_crf);
    s.finish();
  }
  if (const json* v = root.sub("eval")) {
    Section s(*v, "eval");
    s.get("alpha_set", c.eval.alpha_set);
    s.get("beta_set", c.eval.beta_set);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
  const auto& r = c.generator.grammar;
  json doc;
  doc["generator"] = {{"classes", r.classes},
                      {"feature_dim", r.feature_dim},
                      {"dominance", r.dominance},
                      {"duration_min", r.duration_min},
                      {"duration_max", r.duration_max},
                      {"duration_cv", r.duration_cv},
                      {"noise_sigma", r.noise_sigma},
                      {"min_segments", r.min_segments},
                      {"max_segments", r.max_segments},
                      {"seed", r.seed},
                      {"n_train", c.generator.n_train},
                      {"n_test", c.generator.n_test}};
  doc["encoder"] = {{"stages", c.encoder.stages},
                    {"layers_per_stage", c.encoder.layers_per_stage},
                    {"heads", c.encoder.heads},
                    {"hidden", c.encoder.hidden},
                    {"window", c.encoder.window},
                    {"global_stride", c.encoder.global_stride},
                    {"dropout", c.encoder.dropout}};
  doc["decoder"] = {{"queries", c.decoder.queries},
                    {"layers", c.decoder.layers},
                    {"heads", c.decoder.heads},
                    {"hidden", c.decoder.hidden},
                    {"dropout", c.decoder.dropout},
                    {"max_positions", c.decoder.max_positions},
                    {"duration_mode", c.decoder.duration_mode == DurationMode::dependent ? "dependent" : "independent"},
                    {"set_head", c.decoder.set_head}};
  doc["crf"] = {{"omega", c.crf.omega},
                {"init_mode", c.crf.init == CrfConfig::Init::random ? "random" : "precomputed"}};
  const auto& t = c.train;
  doc["train"] = {{"lambda", t.lambda},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"learning_rate", t.learning_rate},
                  {"warmup_epochs", t.warmup_epochs},
                  {"weight_decay", t.weight_decay},
                  {"sample_rate", t.sample_rate},
                  {"alpha_set", t.alpha_set},
                  {"seed", t.seed},
                  {"grad_clip", t.grad_clip},
                  {"use_seg", t.use_seg},
                  {"use_smooth", t.use_smooth},
                  {"use_duration", t.use_duration},
                  {"use_bacr_fut", t.use_bacr_fut},
                  {"use_bacr_past", t.use_bacr_past},
                  {"use_crf", t.use_crf}};
  doc["eval"] = {{"alpha_set", c.eval.alpha_set}, {"beta_set", c.eval.beta_set}};
  return doc;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a64(to_json(config).dump()); }

std::string describe_config_defaults() {
  std::ostringstream os;
  os << "Run configuration (JSON). Every key is optional; unknown keys are rejected.\n"
        "Defaults:\n"
     << to_json(RunConfig{}).dump(2) << "\n";
  return os.str();
}

const std::vector<std::string>& toggle_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : toggle_paths()) n.push_back(k);
    return n;
  }();
  return names;
}

void apply_toggle(json& doc, const std::string& name, const json& value) {
  const auto& paths = toggle_paths();
  auto it = paths.find(name);
  if (it == paths.end()) throw ConfigError("unknown toggle '" + name + "'");
  doc[json::json_pointer(it->second)] = value;
}

}  // namespace tcca
