#include "idea/eval.hpp"

#include "idea/rng.hpp"
#include "idea/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace idea {

namespace {

constexpr const char* kValidScenarios =
    "clean, feature_pgd, edge_flip, node_inject, poisoned:<path>, random_poison:<rate>";

Real mean(const std::vector<Real>& v) {
  return v.empty() ? 0 : std::accumulate(v.begin(), v.end(), Real(0)) / static_cast<Real>(v.size());
}

Real sample_std(const std::vector<Real>& v) {
  if (v.size() < 2) return 0;
  const Real m = mean(v);
  Real ss = 0;
  for (Real x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<Real>(v.size() - 1));
}

/// Owns a model and exposes it through its classifier view.
template <typename Model, typename View>
class OwningClassifier final : public NodeClassifier {
 public:
  explicit OwningClassifier(Model model) : model_(std::move(model)), view_(model_) {}

  int num_classes() const override { return view_.num_classes(); }
  Matrix input_projection(const Matrix& f) const override { return view_.input_projection(f); }
  Matrix projection_to_features(const Matrix& d) const override { return view_.projection_to_features(d); }
  Matrix predict_projected(const SparseMatrix& a, const Matrix& p) const override {
    return view_.predict_projected(a, p);
  }
  Real loss_projected(const SparseMatrix& a, const Matrix& p, std::span<const NodeId> nodes, const LabelVector& y,
                      Matrix* dp, AdjacencyGradient* da) const override {
    return view_.loss_projected(a, p, nodes, y, dp, da);
  }
  Matrix embed(const SparseMatrix& a, const Matrix& f) const override { return view_.embed(a, f); }

 private:
  Model model_;
  View view_;
};

Real parse_rate(const std::string& scenario, std::string_view text) {
  try {
    std::size_t used = 0;
    const Real rate = std::stod(std::string(text), &used);
    if (used != text.size() || !(rate >= 0 && rate <= 1)) throw std::invalid_argument("range");
    return rate;
  } catch (const std::exception&) {
    throw UnknownScenario("scenario '" + scenario + "': rate must be a number in [0, 1]");
  }
}

}  // namespace

void ScenarioReport::summarize() {
  std::vector<Real> acc;
  for (const auto& r : rows) acc.push_back(r.accuracy);
  avg = mean(acc);
  Real ss = 0;
  for (Real a : acc) ss += (a - avg) * (a - avg);
  std_across_scenarios = acc.empty() ? 0 : std::sqrt(ss / static_cast<Real>(acc.size()));
}

Json ScenarioReport::to_json() const {
  Json j = Json::object();
  j["rows"] = Json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"scenario", r.name}, {"accuracy", r.accuracy}, {"std", r.std}, {"per_seed", r.per_seed}});
  }
  j["avg"] = avg;
  j["std_across_scenarios"] = std_across_scenarios;
  j["provenance"] = provenance;
  return j;
}

std::string ScenarioReport::to_table() const {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  auto line = [&](const std::string& name, Real acc, Real sd) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %7.2f  %6.2f\n", 100 * acc, 100 * sd);
    return name + std::string(width - name.size(), ' ') + buf;
  };
  std::string out = "scenario" + std::string(width - 8, ' ') + "  acc(%)   std\n";
  for (const auto& r : rows) out += line(r.name, r.accuracy, r.std);
  out += line("AVG", avg, std_across_scenarios);
  return out;
}

NodeList select_targets(const SplitMasks& split, Real fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw Error("target fraction must lie in (0, 1]");
  const auto count =
      static_cast<std::size_t>(std::floor(fraction * static_cast<Real>(split.test.size()) + 1e-9));
  if (count == 0) throw Error("target selection is empty");
  NodeList pool = split.test;
  auto rng = substream(seed, "targets");
  shuffle(pool, rng);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Real evaluate(const NodeClassifier& model, const Graph& graph, std::span<const NodeId> nodes) {
  return accuracy(model, graph, nodes);
}

AttackBudget evaluation_budget(const EvalConfig& config, const Graph& graph, Index num_targets) {
  AttackBudget b;
  const Real range = graph.num_nodes() > 0 ? graph.features().maxCoeff() - graph.features().minCoeff() : 0;
  b.feature_eps = config.eval_feature_eps * range;
  b.feature_steps = config.eval_feature_steps;
  b.edge_budget = static_cast<Index>(std::floor(config.eval_edge_rate * static_cast<Real>(graph.num_edges()) + 1e-9));
  if (num_targets > 0 && config.eval_inject_rate > 0) {
    b.inject_nodes = static_cast<Index>(std::ceil(config.eval_inject_rate * static_cast<Real>(num_targets) - 1e-9));
    b.inject_edges_per_node = (num_targets + b.inject_nodes - 1) / b.inject_nodes;
  }
  b.validate();
  return b;
}

std::vector<std::string> split_scenarios(std::string_view text) {
  std::vector<std::string> out;
  std::string token;
  for (char ch : std::string(text) + ",") {
    if (ch == ',') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else if (ch != ' ' && ch != '\t') {
      token += ch;
    }
  }
  return out;
}

void validate_scenarios(const std::vector<std::string>& scenarios) {
  if (scenarios.empty()) throw UnknownScenario(std::string("no scenarios given; valid: ") + kValidScenarios);
  for (const auto& s : scenarios) {
    if (s == "clean" || s == "feature_pgd" || s == "edge_flip" || s == "node_inject") continue;
    if (s.rfind("poisoned:", 0) == 0 && s.size() > 9) continue;
    if (s.rfind("random_poison:", 0) == 0) {
      parse_rate(s, std::string_view(s).substr(14));
      continue;
    }
    throw UnknownScenario("unknown scenario '" + s + "'; valid: " + kValidScenarios);
  }
}

PerturbedGraph scenario_graph(const NodeClassifier& model, const DatasetBundle& data, const std::string& name,
                              std::uint64_t seed, const EvalConfig& config) {
  validate_scenarios({name});
  const Graph& graph = data.graph;
  const NodeList targets = select_targets(data.splits, config.target_fraction, seed);
  const AttackBudget budget = evaluation_budget(config, graph, static_cast<Index>(targets.size()));
  auto rng = substream(seed, "attack");
  PerturbedGraph out;
  if (name == "clean") {
    out.graph = graph;
    out.provenance = {{"attack", "clean"}};
  } else if (name == "feature_pgd") {
    out = evasion_feature_pgd(model, graph, budget, targets);
  } else if (name == "edge_flip") {
    out = evasion_edge_flip_greedy(model, graph, budget, targets, config.edge_flip_shortlist);
  } else if (name == "node_inject") {
    AttackBudget inject = budget;
    inject.feature_steps = config.eval_inject_steps;
    out = node_injection_attack(model, graph, inject, targets, rng);
  } else if (name.rfind("random_poison:", 0) == 0) {
    out = random_poison(graph, parse_rate(name, std::string_view(name).substr(14)), rng);
  } else {
    out.graph = load_perturbed_graph(name.substr(9), &out.provenance);
    if (out.graph.num_nodes() < graph.num_nodes()) throw Error("poisoned graph has fewer nodes than the dataset");
  }
  out.provenance["scenario"] = name;
  out.provenance["seed"] = seed;
  return out;
}

bool is_poisoning_scenario(std::string_view name) {
  return name.rfind("poisoned:", 0) == 0 || name.rfind("random_poison:", 0) == 0;
}

ScenarioReport run_scenarios(const NodeClassifier& model, const DatasetBundle& data,
                             const std::vector<std::string>& scenarios, const std::vector<std::uint64_t>& seeds,
                             const EvalConfig& config, const ModelTrainer& retrain, const ScenarioObserver& observe) {
  validate_scenarios(scenarios);
  if (seeds.empty()) throw Error("no evaluation seeds");
  ScenarioReport report;
  for (const auto& name : scenarios) {
    ScenarioRow row;
    row.name = name;
    for (std::uint64_t seed : seeds) {
      Real acc = 0;
      if (!is_poisoning_scenario(name)) {
        const NodeList targets = select_targets(data.splits, config.target_fraction, seed);
        const Graph attacked = scenario_graph(model, data, name, seed, config).graph;
        acc = evaluate(model, attacked, targets);
        if (observe) observe(name, seed, model, attacked, targets);
      } else {
        if (!retrain) throw Error("poisoning scenario '" + name + "' needs a retraining function");
        DatasetBundle poisoned = data;
        poisoned.graph = scenario_graph(model, data, name, seed, config).graph;
        const auto retrained = retrain(poisoned, seed);
        acc = evaluate(*retrained, poisoned.graph, data.splits.test);
        if (observe) observe(name, seed, *retrained, poisoned.graph, data.splits.test);
      }
      row.per_seed.push_back(acc);
    }
    row.accuracy = mean(row.per_seed);
    row.std = sample_std(row.per_seed);
    report.rows.push_back(std::move(row));
  }
  report.summarize();
  Json seed_list = Json::array();
  for (auto s : seeds) seed_list.push_back(s);
  report.provenance["seeds"] = seed_list;
  report.provenance["dataset"] = data.name;
  return report;
}

ScenarioReport merge_seed_reports(const std::vector<ScenarioReport>& reports) {
  if (reports.empty()) throw Error("no reports to merge");
  ScenarioReport merged;
  for (std::size_t r = 0; r < reports.front().rows.size(); ++r) {
    ScenarioRow row;
    row.name = reports.front().rows[r].name;
    for (const auto& rep : reports) {
      if (rep.rows.size() != reports.front().rows.size() || rep.rows[r].name != row.name) {
        throw Error("reports disagree on their scenarios");
      }
      row.per_seed.insert(row.per_seed.end(), rep.rows[r].per_seed.begin(), rep.rows[r].per_seed.end());
    }
    row.accuracy = mean(row.per_seed);
    row.std = sample_std(row.per_seed);
    merged.rows.push_back(std::move(row));
  }
  merged.summarize();
  return merged;
}

ModelTrainer idea_trainer(const TrainConfig& config) {
  return [config](const DatasetBundle& data, std::uint64_t seed) -> std::shared_ptr<NodeClassifier> {
    TrainConfig c = config;
    c.seed = seed;
    return std::make_shared<OwningClassifier<IdeaModel, IdeaClassifier>>(fit(data, c).best_model);
  };
}

ModelTrainer gcn_trainer(const TrainConfig& config) {
  return [config](const DatasetBundle& data, std::uint64_t seed) -> std::shared_ptr<NodeClassifier> {
    TrainConfig c = config;
    c.seed = seed;
    return std::make_shared<OwningClassifier<GcnModel, GcnClassifier>>(fit_gcn(data, c));
  };
}

ScenarioReport run_ablation(const DatasetBundle& data, const RunConfig& config, Variant variant) {
  TrainConfig train = config.train;
  train.variant = variant;
  const auto seeds = parse_seed_list(config.eval.seeds);
  const auto scenarios = split_scenarios(config.eval.scenarios);
  validate_scenarios(scenarios);
  const ModelTrainer trainer = idea_trainer(train);
  std::vector<ScenarioReport> per_seed;
  for (std::uint64_t seed : seeds) {
    const auto model = trainer(data, seed);
    per_seed.push_back(run_scenarios(*model, data, scenarios, {seed}, config.eval, trainer));
  }
  ScenarioReport report = merge_seed_reports(per_seed);
  report.provenance["variant"] = std::string(variant_name(variant));
  Json seed_list = Json::array();
  for (auto s : seeds) seed_list.push_back(s);
  report.provenance["seeds"] = seed_list;
  report.provenance["dataset"] = data.name;
  return report;
}

}  // namespace idea
