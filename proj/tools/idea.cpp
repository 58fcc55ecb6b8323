#include "idea/eval.hpp"
#include "idea/plot.hpp"
#include "idea/synthetic_causal.hpp"
#include "idea/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef IDEA_VERSION
#define IDEA_VERSION "unknown"
#endif

using namespace idea;

namespace {

constexpr int kFailure = 1;
constexpr int kBadData = 2;
constexpr int kMissingCheckpoint = 3;
constexpr int kUnknownScenario = 4;

/// Malformed or missing dataset input.
class DataError : public Error {
 public:
  using Error::Error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Relative output paths live under IDEA_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& out) {
  const fs::path p(out);
  const char* root = std::getenv("IDEA_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

struct Manifest {
  explicit Manifest(std::string name) : command(std::move(name)) {}

  std::string command;
  std::string started_at = utc_now();
  std::string config_hash;
  Json seed = nullptr;
  std::vector<std::string> outputs;
  Json extra = Json::object();

  Json to_json() const {
    Json j = Json::object();
    j["command"] = command;
    j["version"] = IDEA_VERSION;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    j["outputs"] = outputs;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }

  void write(const fs::path& dir) {
    outputs.push_back("manifest.json");
    write_json(to_json(), dir / "manifest.json");
  }
};

DatasetBundle load_data(const std::string& dir) {
  try {
    if (!fs::is_directory(dir)) throw Error("dataset directory " + dir + " does not exist");
    return load_bundle(dir);
  } catch (const Error& e) {
    throw DataError(e.what());
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig config = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string file_stem_for(const std::string& scenario) {
  std::string out;
  for (char c : scenario) out += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ? c : '_';
  return out;
}

// --- prepare-data ------------------------------------------------------------

struct PrepareArgs {
  std::string raw;
  std::string out;
  std::uint64_t seed = 0;
};

int prepare_data(const PrepareArgs& a) {
  Manifest manifest{"prepare-data"};
  manifest.seed = a.seed;
  Graph raw;
  std::string name;
  try {
    if (fs::exists(fs::path(a.raw) / "meta.json")) {
      DatasetMeta meta;
      raw = load_dataset(a.raw, &meta);
      name = meta.name;
    } else {
      raw = load_linqs(a.raw, &name);
    }
    if (raw.num_nodes() == 0) throw Error("raw dataset has no nodes");
    if ((raw.labels().array() < 0).all()) throw Error("raw dataset has no labels");
  } catch (const Error& e) {
    throw DataError(e.what());
  }
  NodeList original_ids;
  const Graph lcc = largest_connected_component(raw, &original_ids);
  const fs::path out = output_path(a.out);
  save_dataset(lcc, out, name, {{"source_nodes", raw.num_nodes()}, {"source_edges", raw.num_edges()}});
  save_split(make_split(lcc, {0.1, 0.1, 0.8}, a.seed), out / "split.tsv");
  write_node_list(original_ids, out / "original_ids.txt");
  manifest.outputs = {"meta.json", "edges.tsv", "features.csv", "labels.tsv", "split.tsv", "original_ids.txt"};
  manifest.extra["dataset"] = name;
  manifest.write(out);
  std::cout << name << ": " << lcc.num_nodes() << " nodes, " << lcc.num_edges() << " edges, "
            << lcc.num_features() << " features, " << lcc.num_classes() << " classes -> " << out.string() << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string sweep;
  std::string model = "idea";
  bool quiet = false;
};

void train_one(const DatasetBundle& data, RunConfig config, const TrainArgs& a, const fs::path& dir) {
  Manifest manifest{"train"};
  manifest.config_hash = config.hash();
  manifest.seed = config.train.seed;
  manifest.extra["dataset"] = data.name;
  manifest.extra["model"] = a.model;
  fs::create_directories(dir);
  write_text(config.to_text(), dir / "config.txt");
  manifest.outputs = {"checkpoint.bin", "config.txt"};
  if (a.model == "gcn") {
    Real best_val = 0;
    const GcnModel model = fit_gcn(data, config.train, &best_val);
    manifest.extra["best_val_accuracy"] = best_val;
    manifest.outputs.push_back("manifest.json");
    save_checkpoint(model, dir, manifest.to_json());
  } else {
    FitHooks hooks;
    if (!a.quiet) {
      hooks.on_epoch = [](const EpochMetrics& m) {
        std::cout << "epoch " << m.epoch << " L_P=" << format_real(m.losses.predictive)
                  << " L_I=" << format_real(m.losses.node_invariance)
                  << " L_E=" << format_real(m.losses.structure_invariance) << " L_D=" << format_real(m.domain_loss)
                  << " val=" << format_real(m.val_accuracy) << "\n";
      };
    }
    const TrainState state = fit(data, config.train, hooks);
    write_metrics_csv(state.history, dir / "metrics.csv");
    manifest.outputs.push_back("metrics.csv");
    manifest.extra["epochs_run"] = state.epoch;
    manifest.extra["best_epoch"] = state.best_epoch;
    manifest.extra["best_val_accuracy"] = state.best_val_accuracy;
    manifest.outputs.push_back("manifest.json");
    save_checkpoint(state.best_model, dir, manifest.to_json());
  }
  std::cout << "checkpoint -> " << dir.string() << "\n";
}

int train(const TrainArgs& a) {
  RunConfig config = load_run_config(a.config, a.overrides);
  if (a.epochs) config.train.epochs = *a.epochs;
  if (config.train.epochs < 0) throw Error("epochs must be nonnegative");
  std::vector<std::uint64_t> seeds;
  if (!a.sweep.empty()) {
    if (a.seed) throw Error("--seed and --sweep are exclusive");
    seeds = parse_seed_list(read_text(a.sweep));
  }
  const DatasetBundle data = load_data(a.dataset);
  const fs::path out = output_path(a.out);
  if (seeds.empty()) {
    if (a.seed) config.train.seed = *a.seed;
    train_one(data, config, a, out);
    return 0;
  }
  for (std::uint64_t s : seeds) {
    config.train.seed = s;
    train_one(data, config, a, out / ("seed_" + std::to_string(s)));
  }
  return 0;
}

// --- attack ------------------------------------------------------------------

struct AttackArgs {
  std::string dataset;
  std::string checkpoint;
  std::string scenario;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int attack(const AttackArgs& a) {
  validate_scenarios({a.scenario});
  if (a.scenario == "clean" || a.scenario.rfind("poisoned:", 0) == 0) {
    throw UnknownScenario("attack needs one of feature_pgd, edge_flip, node_inject, random_poison:<rate>");
  }
  const RunConfig config = load_run_config(a.config, a.overrides);
  const std::uint64_t seed = a.seed ? *a.seed : parse_seed_list(config.eval.seeds).front();
  const LoadedModel loaded = load_checkpoint(a.checkpoint);
  const DatasetBundle data = load_data(a.dataset);
  const auto model = loaded.classifier();

  Manifest manifest{"attack"};
  manifest.config_hash = config.hash();
  manifest.seed = seed;
  PerturbedGraph attacked = scenario_graph(*model, data, a.scenario, seed, config.eval);
  const fs::path out = output_path(a.out);
  manifest.outputs = {"meta.json", "edges.tsv", "features.csv", "labels.tsv"};
  if (!is_poisoning_scenario(a.scenario)) {
    const NodeList targets = select_targets(data.splits, config.eval.target_fraction, seed);
    const AttackBudget budget = evaluation_budget(config.eval, data.graph, static_cast<Index>(targets.size()));
    const AuditReport audit = audit_perturbation(data.graph, attacked.graph, budget);
    attacked.provenance["audit_ok"] = audit.ok;
    attacked.provenance["audit_violations"] = audit.violations;
    const Real before = evaluate(*model, data.graph, targets);
    const Real after = evaluate(*model, attacked.graph, targets);
    manifest.extra["target_accuracy_clean"] = before;
    manifest.extra["target_accuracy_attacked"] = after;
    std::cout << a.scenario << ": target accuracy " << format_real(before) << " -> " << format_real(after) << "\n";
    save_perturbed_graph(attacked.graph, out, attacked.provenance);
    write_node_list(targets, out / "targets.txt");
    manifest.outputs.push_back("targets.txt");
  } else {
    save_perturbed_graph(attacked.graph, out, attacked.provenance);
  }
  manifest.extra["scenario"] = a.scenario;
  manifest.extra["checkpoint"] = a.checkpoint;
  manifest.write(out);
  std::cout << "perturbed graph -> " << out.string() << "\n";
  return 0;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string dataset;
  std::string checkpoint;
  std::string config;
  std::vector<std::string> overrides;
  std::string scenarios;
  std::string seeds;
  std::string out;
  bool embeddings = false;
};

void write_report(const ScenarioReport& report, const fs::path& dir, Manifest& manifest) {
  write_json(report.to_json(), dir / "report.json");
  write_text(report.to_table(), dir / "report.txt");
  manifest.outputs.insert(manifest.outputs.end(), {"report.json", "report.txt"});
  std::cout << report.to_table();
}

int evaluate_command(const EvaluateArgs& a) {
  RunConfig config = load_run_config(a.config, a.overrides);
  if (!a.scenarios.empty()) set_config_value(config, "scenarios", a.scenarios);
  if (!a.seeds.empty()) set_config_value(config, "seeds", a.seeds);
  const auto scenarios = split_scenarios(config.eval.scenarios);
  validate_scenarios(scenarios);
  const auto seeds = parse_seed_list(config.eval.seeds);
  const LoadedModel loaded = load_checkpoint(a.checkpoint);
  const DatasetBundle data = load_data(a.dataset);
  const auto model = loaded.classifier();
  const ModelTrainer retrain = loaded.kind == "gcn" ? gcn_trainer(config.train) : idea_trainer(config.train);

  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  Manifest manifest{"evaluate"};
  manifest.config_hash = config.hash();
  manifest.seed = seeds.front();
  ScenarioObserver observe;
  if (a.embeddings) {
    fs::create_directories(out / "embeddings");
    observe = [&](const std::string& name, std::uint64_t seed, const NodeClassifier& m, const Graph& g,
                  const NodeList& nodes) {
      if (seed != seeds.front()) return;
      const Matrix z = m.embed(normalize_adjacency(g), g.features());
      Matrix rows(static_cast<Index>(nodes.size()), z.cols());
      LabelVector labels(static_cast<Index>(nodes.size()));
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        rows.row(static_cast<Index>(i)) = z.row(nodes[i]);
        labels[static_cast<Index>(i)] = g.label(nodes[i]);
      }
      const std::string file = "embeddings/" + file_stem_for(name) + ".csv";
      export_embeddings(rows, labels, out / file, nodes);
      manifest.outputs.push_back(file);
    };
  }
  ScenarioReport report = run_scenarios(*model, data, scenarios, seeds, config.eval, retrain, observe);
  report.provenance["checkpoint"] = a.checkpoint;
  report.provenance["model"] = loaded.kind;
  report.provenance["config_hash"] = config.hash();
  write_report(report, out, manifest);
  manifest.write(out);
  return 0;
}

// --- ablate ------------------------------------------------------------------

struct AblateArgs {
  std::string dataset;
  std::string config;
  std::vector<std::string> overrides;
  std::string variant;
  std::string scenarios;
  std::string seeds;
  std::string out;
};

int ablate(const AblateArgs& a) {
  RunConfig config = load_run_config(a.config, a.overrides);
  if (!a.scenarios.empty()) set_config_value(config, "scenarios", a.scenarios);
  if (!a.seeds.empty()) set_config_value(config, "seeds", a.seeds);
  validate_scenarios(split_scenarios(config.eval.scenarios));
  const Variant variant = parse_variant(a.variant);
  const DatasetBundle data = load_data(a.dataset);
  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  Manifest manifest{"ablate"};
  manifest.config_hash = config.hash();
  manifest.seed = parse_seed_list(config.eval.seeds).front();
  manifest.extra["variant"] = a.variant;
  ScenarioReport report = run_ablation(data, config, variant);
  report.provenance["config_hash"] = config.hash();
  write_report(report, out, manifest);
  manifest.write(out);
  return 0;
}

// --- synthetic-check ---------------------------------------------------------

struct SyntheticArgs {
  std::string out;
  SyntheticCheckOptions options;
};

int synthetic_check(const SyntheticArgs& a) {
  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  Manifest manifest{"synthetic-check"};
  manifest.seed = a.options.seed;
  const SyntheticCheckReport report = run_synthetic_check(a.options);
  write_json(report.to_json(), out / "report.json");
  manifest.outputs = {"report.json"};
  manifest.extra["weights_pass"] = report.weights_pass;
  manifest.extra["spread_pass"] = report.spread_pass;
  manifest.write(out);
  std::cout << "invariant weight error (L-inf): " << format_real(report.invariant.weight_error) << " ("
            << (report.weights_pass ? "pass" : "FAIL") << ")\n"
            << "held-out risk spread: invariant " << format_real(report.invariant.spread) << ", ERM "
            << format_real(report.erm.spread) << " (" << (report.spread_pass ? "pass" : "FAIL") << ")\n";
  return 0;
}

// --- plot --------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int plot(const PlotArgs& a) {
  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  Manifest manifest{"plot"};
  for (const auto& input : a.inputs) {
    EmbeddingTable table;
    try {
      table = read_embeddings(input);
    } catch (const Error& e) {
      throw DataError(e.what());
    }
    const std::string stem = fs::path(input).stem().string();
    write_text(scatter_svg(principal_components_2d(table.z), table.labels, stem), out / (stem + ".svg"));
    manifest.outputs.push_back(stem + ".svg");
  }
  manifest.write(out);
  std::cout << a.inputs.size() << " plot(s) -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially robust node classification with invariant causal defence"};
  app.set_version_flag("--version", IDEA_VERSION);
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prep_cmd = app.add_subcommand("prepare-data", "Extract the largest component and write the portable format");
  prep_cmd->add_option("raw", prep.raw, "Raw dataset directory (LINQS layout or portable format)")->required();
  prep_cmd->add_option("out", prep.out, "Output dataset directory")->required();
  prep_cmd->add_option("--seed", prep.seed, "Split seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its checkpoint");
  train_cmd->add_option("dataset", tr.dataset, "Dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "Config file (key = value lines)");
  train_cmd->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Run seed");
  train_cmd->add_option("--epochs", tr.epochs, "Epoch count override");
  train_cmd->add_option("--sweep", tr.sweep, "File of seeds; one checkpoint per seed under <out>/seed_<s>");
  train_cmd->add_option("--model", tr.model, "idea or gcn")->check(CLI::IsMember({"idea", "gcn"}));
  train_cmd->add_flag("--quiet", tr.quiet, "Suppress per-epoch logging");

  AttackArgs at;
  auto* attack_cmd = app.add_subcommand("attack", "Write the perturbed graph of one attack scenario");
  attack_cmd->add_option("dataset", at.dataset, "Dataset directory")->required();
  attack_cmd->add_option("--checkpoint", at.checkpoint, "Checkpoint directory")->required();
  attack_cmd->add_option("--scenario", at.scenario, "feature_pgd, edge_flip, node_inject, random_poison:<rate>")
      ->required();
  attack_cmd->add_option("--config", at.config, "Config file");
  attack_cmd->add_option("--set", at.overrides, "Config override key=value (repeatable)");
  attack_cmd->add_option("--out", at.out, "Output directory")->required();
  attack_cmd->add_option("--seed", at.seed, "Target-selection and attack seed");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint across attack scenarios");
  eval_cmd->add_option("dataset", ev.dataset, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--config", ev.config, "Config file");
  eval_cmd->add_option("--set", ev.overrides, "Config override key=value (repeatable)");
  eval_cmd->add_option("--scenarios", ev.scenarios, "Comma-separated scenario list");
  eval_cmd->add_option("--seeds", ev.seeds, "Comma-separated seed list");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_flag("--embeddings", ev.embeddings, "Export scored embeddings per scenario");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate one ablation variant per seed");
  ablate_cmd->add_option("dataset", ab.dataset, "Dataset directory")->required();
  ablate_cmd->add_option("--config", ab.config, "Config file");
  ablate_cmd->add_option("--set", ab.overrides, "Config override key=value (repeatable)");
  ablate_cmd->add_option("--variant", ab.variant, "full, no_LI, no_LE, no_LI_LE, no_LD")->required();
  ablate_cmd->add_option("--scenarios", ab.scenarios, "Comma-separated scenario list");
  ablate_cmd->add_option("--seeds", ab.seeds, "Comma-separated seed list");
  ablate_cmd->add_option("--out", ab.out, "Output directory")->required();

  SyntheticArgs sy;
  auto* synth_cmd = app.add_subcommand("synthetic-check", "Fit the invariant linear defender on a synthetic SCM");
  synth_cmd->add_option("--out", sy.out, "Output directory")->required();
  synth_cmd->add_option("--seed", sy.options.seed, "Instance seed");
  synth_cmd->add_option("--samples", sy.options.samples_per_domain, "Samples per domain");
  synth_cmd->add_option("--restarts", sy.options.fit.restarts, "Random restarts of the projection search");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Scatter plot of embeddings CSVs on two principal components");
  plot_cmd->add_option("inputs", pl.inputs, "Embeddings CSV files")->required();
  plot_cmd->add_option("--out", pl.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*prep_cmd) return prepare_data(prep);
    if (*train_cmd) return train(tr);
    if (*attack_cmd) return attack(at);
    if (*eval_cmd) return evaluate_command(ev);
    if (*ablate_cmd) return ablate(ab);
    if (*synth_cmd) return synthetic_check(sy);
    if (*plot_cmd) return plot(pl);
  } catch (const UnknownScenario& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnknownScenario;
  } catch (const MissingCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingCheckpoint;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
