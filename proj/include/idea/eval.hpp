#pragma once

#include "idea/attack.hpp"
#include "idea/config.hpp"
#include "idea/data_io.hpp"
#include "idea/nn.hpp"

#include <functional>
#include <memory>

namespace idea {

/// Raised for scenario names outside the known set.
class UnknownScenario : public Error {
 public:
  using Error::Error;
};

struct ScenarioRow {
  std::string name;
  Real accuracy = 0;          // mean over seeds
  Real std = 0;               // sample std over seeds (0 for one seed)
  std::vector<Real> per_seed;
};

struct ScenarioReport {
  std::vector<ScenarioRow> rows;
  Real avg = 0;
  Real std_across_scenarios = 0;  // population std of row accuracies
  Json provenance = Json::object();

  /// Recomputes avg and std_across_scenarios from rows.
  void summarize();
  Json to_json() const;
  std::string to_table() const;
};

/// floor(fraction * |test|) test nodes drawn without replacement, sorted.
NodeList select_targets(const SplitMasks& split, Real fraction, std::uint64_t seed);

/// Deterministic-mode accuracy on `nodes`.
Real evaluate(const NodeClassifier& model, const Graph& graph, std::span<const NodeId> nodes);

/// Evaluation-time budgets: feature radius relative to the clean feature
/// range, edge flips as a fraction of |E|, ceil(rate * |targets|) injected
/// nodes with ceil(|targets| / injected) edges each.
AttackBudget evaluation_budget(const EvalConfig& config, const Graph& graph, Index num_targets);

/// Throws UnknownScenario listing the valid names.
void validate_scenarios(const std::vector<std::string>& scenarios);
std::vector<std::string> split_scenarios(std::string_view text);

/// Trains a fresh model on a (poisoned) dataset with the given seed.
using ModelTrainer = std::function<std::shared_ptr<NodeClassifier>(const DatasetBundle&, std::uint64_t seed)>;

/// Graph seen under one scenario and seed: the attacked graph for evasion
/// scenarios (targets from select_targets), the poisoned graph otherwise.
PerturbedGraph scenario_graph(const NodeClassifier& model, const DatasetBundle& data, const std::string& scenario,
                              std::uint64_t seed, const EvalConfig& config);

bool is_poisoning_scenario(std::string_view scenario);

/// Called once per (scenario, seed) with the scored model, graph and nodes.
using ScenarioObserver = std::function<void(const std::string& scenario, std::uint64_t seed,
                                            const NodeClassifier& model, const Graph& graph, const NodeList& nodes)>;

/// Evasion scenarios attack `model` on the targets of each seed; poisoning
/// scenarios retrain through `retrain` and score the full test split.
ScenarioReport run_scenarios(const NodeClassifier& model, const DatasetBundle& data,
                             const std::vector<std::string>& scenarios, const std::vector<std::uint64_t>& seeds,
                             const EvalConfig& config, const ModelTrainer& retrain,
                             const ScenarioObserver& observe = {});

/// Per-seed reports merged row by row (means and sample std over seeds).
ScenarioReport merge_seed_reports(const std::vector<ScenarioReport>& reports);

/// IDEA trainer with `config` and the given seed.
ModelTrainer idea_trainer(const TrainConfig& config);
ModelTrainer gcn_trainer(const TrainConfig& config);

/// Trains the variant once per seed of config.eval.seeds and runs the
/// scenario suite with that seed.
ScenarioReport run_ablation(const DatasetBundle& data, const RunConfig& config, Variant variant);

}  // namespace idea
