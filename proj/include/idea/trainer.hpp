#pragma once

#include "idea/attack.hpp"
#include "idea/config.hpp"
#include "idea/data_io.hpp"
#include "idea/losses.hpp"
#include "idea/nn.hpp"
#include "idea/optim.hpp"

#include <functional>
#include <random>

namespace idea {

/// Inputs of one model update: the clean and perturbed views with the noise
/// and dropout drawn for each, plus the batch and its sampled neighbours.
struct ModelBatch {
  const SparseMatrix* clean_adj = nullptr;
  const Matrix* clean_features = nullptr;
  const SparseMatrix* perturbed_adj = nullptr;
  const Matrix* perturbed_features = nullptr;
  const LabelVector* labels = nullptr;
  NodeList nodes;
  NodeList neighbors;  // neighbors[r] was sampled for nodes[r]
  Matrix clean_noise;
  Matrix perturbed_noise;
  DropoutMasks clean_dropout;
  DropoutMasks perturbed_dropout;
};

/// Per-term multipliers used by ablations and gradient checks. A zero weight
/// removes the term and reports it as 0.
struct ObjectiveWeights {
  Real predictive = 1;
  Real node_invariance = 1;
  Real structure_invariance = 1;
};

ObjectiveWeights variant_weights(Variant variant);

/// L_P + L_I + L_E over the 2|B| samples (clean rows then perturbed rows).
/// `hard_domains` (2|B| x |D|) fixes the domain of each sample; when null
/// they come from the domain learner. With `grad` set, gradients w.r.t. the
/// encoder and both classifiers are accumulated into it; when
/// `detach_domain_classifier` is set the domain classifier only receives the
/// gradient of its own likelihood terms.
LossBreakdown model_objective(const IdeaModel& model, const ModelBatch& batch, const Matrix* hard_domains, Real alpha,
                              const ObjectiveWeights& weights, bool detach_domain_classifier, IdeaModel* grad);

/// L_D on the 2|B| samples of `batch`; gradient w.r.t. the domain learner.
Real domain_objective(const IdeaModel& model, const ModelBatch& batch, DomainLearnerParams* grad);

struct EpochMetrics {
  int epoch = 0;
  LossBreakdown losses;
  Real domain_loss = 0;
  Real val_accuracy = 0;
};

struct TrainStreams {
  std::mt19937_64 batch;
  std::mt19937_64 neighbor;
  std::mt19937_64 attack;
  std::mt19937_64 noise;
  std::mt19937_64 dropout;
};

struct TrainState {
  IdeaModel model;
  IdeaModel best_model;
  Adam model_optimizer;
  Adam domain_optimizer;
  Adam domain_classifier_optimizer;
  Graph cached_perturbation;
  int epoch = 0;
  Real best_val_accuracy = -1;
  int best_epoch = -1;
  int nonfinite_streak = 0;
  TrainStreams rng;
  Matrix fixed_domains;  // 2 x n domain ids for the no_LD variant
  std::vector<EpochMetrics> history;
};

/// Attack budget of the training-time generators for this graph.
AttackBudget training_budget(const TrainConfig& config, const Graph& graph);

TrainState initialize_state(const DatasetBundle& data, const TrainConfig& config);

/// Training nodes for one update phase.
NodeList draw_batch(TrainState& state, const DatasetBundle& data, const TrainConfig& config);

/// Fresh structure-then-feature attack against the current model.
Graph generate_perturbation(TrainState& state, const Graph& clean, std::span<const NodeId> batch,
                            const TrainConfig& config);

LossBreakdown update_model_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                                const TrainConfig& config);
/// Keeps whichever of {clean, cached, fresh} has the largest L_P on `batch`.
/// Returns that loss.
Real update_attacker_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                          const TrainConfig& config);
Real update_domain_learner_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                                const TrainConfig& config);

/// Deterministic-mode accuracy of `classifier` on `nodes`.
Real accuracy(const NodeClassifier& classifier, const Graph& graph, std::span<const NodeId> nodes);

struct FitHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const TrainState&)> on_improvement;
};

/// Algorithm loop with early stopping on clean validation accuracy. The
/// returned state's best_model holds the best validation checkpoint.
TrainState fit(const DatasetBundle& data, const TrainConfig& config, const FitHooks& hooks = {});

/// Plain graph-convolution baseline with the same optimiser settings,
/// dropout, and early stopping; no attacks.
GcnModel fit_gcn(const DatasetBundle& data, const TrainConfig& config, Real* best_val_accuracy = nullptr);

// --- Checkpoints ---------------------------------------------------------------

/// Raised when a checkpoint directory lacks its files.
class MissingCheckpoint : public Error {
 public:
  using Error::Error;
};

/// checkpoint.bin holds the flattened parameters as little-endian doubles;
/// manifest.json records the architecture, seed, epoch and metrics.
void save_checkpoint(const IdeaModel& model, const fs::path& dir, const Json& manifest_extra);
void save_checkpoint(const GcnModel& model, const fs::path& dir, const Json& manifest_extra);

struct LoadedModel {
  std::string kind;  // "idea" or "gcn"
  IdeaModel idea;
  GcnModel gcn;
  Json manifest;

  std::unique_ptr<NodeClassifier> classifier() const;
};
LoadedModel load_checkpoint(const fs::path& dir);

void write_metrics_csv(const std::vector<EpochMetrics>& history, const fs::path& path);

}  // namespace idea
