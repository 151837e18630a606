#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcca/crf.hpp"
#include "tcca/datagen.hpp"
#include "tcca/decoder.hpp"
#include "tcca/encoder.hpp"

namespace tcca {

struct GeneratorConfig {
  GrammarRecipe grammar;
  int n_train = 300;
  int n_test = 60;
};

struct TrainConfig {
  double lambda = 0.2;  // smoothing weight
  int epochs = 80;
  int batch_size = 16;
  double learning_rate = 2e-3;
  int warmup_epochs = 5;
  double weight_decay = 1e-2;
  int sample_rate = 3;
  std::vector<double> alpha_set{0.2, 0.3, 0.5};
  std::uint64_t seed = 1;
  double grad_clip = 10.0;
  bool use_seg = true;
  bool use_smooth = true;
  bool use_duration = true;
  bool use_bacr_fut = true;
  bool use_bacr_past = true;
  bool use_crf = true;

  void validate() const;
};

struct EvalConfig {
  std::vector<double> alpha_set{0.2, 0.3};
  std::vector<double> beta_set{0.1, 0.2, 0.3, 0.5};
};

struct RunConfig {
  GeneratorConfig generator;
  EncoderConfig encoder;
  DecoderConfig decoder;
  CrfConfig crf;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

// Raised for malformed or unknown configuration content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

// Stable hash of the canonical JSON form.
std::uint64_t config_hash(const RunConfig& config);

// Multi-line description of every key and its default, for --help.
std::string describe_config_defaults();

// Ablation toggles by name, mapped onto configuration keys.
const std::vector<std::string>& toggle_names();
// Applies `value` to the toggle `name`; throws ConfigError on unknown names.
void apply_toggle(nlohmann::json& doc, const std::string& name, const nlohmann::json& value);

}  // namespace tcca
