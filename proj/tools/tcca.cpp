// Command-line front end: dataset generation, training, evaluation,
// ablation sweeps and transition-matrix export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcca/checkpoint.hpp"
#include "tcca/evaluation.hpp"
#include "tcca/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tcca;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kNumerical = 3, kCompat = 4, kMode = 5 };

struct Failure {
  int code;
  std::string message;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kUsage, "cannot write " + path.string()};
  out << content;
  if (!out) throw Failure{kUsage, "failed writing " + path.string()};
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Failure{kUsage, "cannot create directory " + dir.string()};
}

RunConfig read_config(const std::string& path) {
  try {
    return load_run_config(path);
  } catch (const ConfigError& e) {
    throw Failure{kUsage, e.what()};
  }
}

Dataset read_data(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw Failure{kUsage, "no dataset manifest in " + dir.string()};
  try {
    return read_dataset(dir);
  } catch (const std::exception& e) {
    throw Failure{kUsage, std::string("cannot read dataset: ") + e.what()};
  }
}

Checkpoint read_checkpoint(const fs::path& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw Failure{kCompat, e.what()};
  }
}

void log_epoch(const EpochLog& e) {
  std::cerr << "epoch " << e.epoch << " lr " << e.learning_rate;
  for (const auto& [name, value] : e.mean.terms()) std::cerr << ' ' << name << ' ' << value;
  std::cerr << '\n';
}

int cmd_gen(const std::string& config_path, const fs::path& out) {
  const RunConfig config = read_config(config_path);
  const GeneratorSpec spec = make_generator_spec(config.generator.grammar);
  const Dataset data = sample_dataset(spec, config.generator.n_train, config.generator.n_test);
  make_dir(out);
  std::string hash;
  try {
    hash = write_dataset(data, out);
  } catch (const std::exception& e) {
    throw Failure{kUsage, e.what()};
  }
  std::cout << hash << '\n';
  return kOk;
}

int cmd_train(const std::string& config_path, const fs::path& data_dir, const fs::path& out) {
  const RunConfig config = read_config(config_path);
  const Dataset data = read_data(data_dir);
  make_dir(out);
  TrainOptions options;
  options.on_epoch = log_epoch;
  const TrainResult result = train(config, data, options);
  save_checkpoint(out / "model.ckpt", result.model, result.optimizer, manifest_hash(data_dir), result.epochs,
                  result.rng_state);
  write_file(out / "train_log.csv", epoch_log_csv(result.log));
  std::cout << "final loss " << format_double(result.log.back().mean.total) << '\n';
  return kOk;
}

void write_report(const MetricsReport& report, const fs::path& out) {
  make_dir(out);
  write_file(out / "metrics.csv", metrics_csv(report));
  write_file(out / "summary.json", metrics_json(report).dump(2) + "\n");
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const Dataset data = read_data(data_dir);
  if (manifest_hash(data_dir) != ck.data_signature)
    throw Failure{kCompat, "dataset does not match the one the checkpoint was trained on"};
  const MetricsReport report = evaluate(ck.model, data, ck.model.config.eval);
  write_report(report, out);
  std::cout << "mean MoC " << format_double(report.mean_moc()) << '\n';
  return kOk;
}

json read_grid(const std::string& grid) {
  json doc;
  try {
    if (fs::exists(grid)) {
      std::ifstream in(grid);
      doc = json::parse(in);
    } else {
      doc = json::parse(grid);
    }
  } catch (const json::exception& e) {
    throw Failure{kUsage, std::string("grid is neither a JSON file nor inline JSON: ") + e.what()};
  }
  if (!doc.is_object() || doc.empty()) throw Failure{kUsage, "grid must be a non-empty JSON object"};
  const auto& names = toggle_names();
  for (const auto& [name, values] : doc.items()) {
    if (std::find(names.begin(), names.end(), name) == names.end()) throw Failure{kUsage, "unknown toggle '" + name + "'"};
    if (!values.is_array() || values.empty()) throw Failure{kUsage, "grid values for '" + name + "' must be a non-empty array"};
  }
  return doc;
}

int cmd_ablate(const std::string& config_path, const fs::path& data_dir, const std::string& grid_arg,
               const fs::path& out) {
  const RunConfig base = read_config(config_path);
  const json grid = read_grid(grid_arg);
  const Dataset data = read_data(data_dir);
  make_dir(out);

  std::vector<std::string> keys;
  std::vector<json> values;
  for (const auto& [k, v] : grid.items()) {
    keys.push_back(k);
    values.push_back(v);
  }
  std::size_t combos = 1;
  for (const auto& v : values) combos *= v.size();
  std::ostringstream csv;
  csv << "combo,metric,alpha,beta,value\n";
  for (std::size_t index = 0; index < combos; ++index) {
    // Mixed-radix decode, last grid key varying fastest.
    std::vector<std::size_t> pick(keys.size());
    for (std::size_t i = keys.size(), rest = index; i-- > 0;) {
      pick[i] = rest % values[i].size();
      rest /= values[i].size();
    }
    json doc = to_json(base);
    std::string combo;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const json& v = values[i][pick[i]];
      try {
        apply_toggle(doc, keys[i], v);
      } catch (const ConfigError& e) {
        throw Failure{kUsage, e.what()};
      }
      combo += (i ? ";" : "") + keys[i] + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    }
    RunConfig config;
    try {
      config = parse_run_config(doc);
    } catch (const ConfigError& e) {
      throw Failure{kUsage, "combination " + combo + ": " + e.what()};
    }
    std::cerr << "== " << combo << '\n';
    TrainOptions options;
    options.on_epoch = log_epoch;
    const TrainResult result = train(config, data, options);
    const MetricsReport report = evaluate(result.model, data, config.eval);
    std::istringstream rows(metrics_csv(report));
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) csv << '"' << combo << "\"," << line << '\n';
  }
  write_file(out / "ablation.csv", csv.str());
  std::cout << (out / "ablation.csv").string() << '\n';
  return kOk;
}

int cmd_export(const fs::path& checkpoint, const fs::path& out, const std::string& compare, const std::string& data_dir) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (!ck.model.has_crf()) throw Failure{kMode, "checkpoint was trained without the CRF; no transition matrix to export"};
  const int classes = ck.model.classes;
  make_dir(out);
  const Matrix& m = ck.model.transition_matrix();
  write_file(out / "transitions.csv", transitions_csv(m, classes));
  write_file(out / "transitions.svg",
             transitions_svg(exp_normalize_rows(m, LabelSpace{classes}.augmented_size()), augmented_label_names(classes)));

  std::vector<int> rows(static_cast<std::size_t>(classes));
  std::iota(rows.begin(), rows.end(), 0);
  const Matrix learned = exp_normalize_rows(m, classes);
  if (!compare.empty()) {
    const Checkpoint other = read_checkpoint(compare);
    if (!other.model.has_crf()) throw Failure{kMode, "comparison checkpoint was trained without the CRF"};
    if (other.model.classes != classes) throw Failure{kCompat, "checkpoints disagree on the class count"};
    std::cout << "row_argmax_agreement_between_checkpoints "
              << format_double(row_argmax_agreement(learned, exp_normalize_rows(other.model.transition_matrix(), classes),
                                                    rows, classes))
              << '\n';
  }
  if (!data_dir.empty()) {
    const Dataset data = read_data(data_dir);
    if (data.classes != classes) throw Failure{kCompat, "dataset and checkpoint disagree on the class count"};
    std::cout << "row_argmax_agreement_with_generator "
              << format_double(row_argmax_agreement(learned, data.gt_transitions, rows, classes)) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term action anticipation with a query decoder and a transition CRF"};
  app.require_subcommand(1);
  app.footer("\nExit codes: 0 success, 2 usage/config, 3 numerical failure, 4 compatibility, 5 mode error.\n"
             "TCCA_THREADS caps the worker count (default: available parallelism).\n\n" +
             describe_config_defaults());

  std::string config, data, out, checkpoint, grid, compare;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset; prints the manifest hash");
  gen->add_option("--config", config, "Run configuration JSON")->required();
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model; writes model.ckpt and train_log.csv");
  tr->add_option("--config", config, "Run configuration JSON")->required();
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.csv and summary.json");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data, "Dataset directory the checkpoint was trained on")->required();
  ev->add_option("--out", out, "Output directory")->required();

  auto* ab = app.add_subcommand("ablate", "Train and evaluate every combination of a toggle grid");
  ab->add_option("--config", config, "Base run configuration JSON")->required();
  ab->add_option("--data", data, "Dataset directory")->required();
  ab->add_option("--grid", grid, "JSON object (file or inline) mapping toggle names to value lists")->required();
  ab->add_option("--out", out, "Output directory")->required();
  std::string toggles = "Toggles:";
  for (const auto& t : toggle_names()) toggles += " " + t;
  ab->footer(toggles);

  auto* ex = app.add_subcommand("export-matrix", "Export the learned transitions as CSV and an SVG heat map");
  ex->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ex->add_option("--out", out, "Output directory")->required();
  ex->add_option("--compare", compare, "Second checkpoint; prints row-argmax agreement with it");
  ex->add_option("--data", data, "Dataset directory; prints row-argmax agreement with the generator grammar");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(config, out);
    if (*tr) return cmd_train(config, data, out);
    if (*ev) return cmd_eval(checkpoint, data, out);
    if (*ab) return cmd_ablate(config, data, grid, out);
    if (*ex) return cmd_export(checkpoint, out, compare, data);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    if (f.code == kUsage) std::cerr << "run with --help for usage\n";
    return f.code;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCompat;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
