#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mamlcon/episodes.hpp"
#include "mamlcon/models.hpp"
#include "mamlcon/nncore.hpp"

namespace mamlcon {

struct InnerLoopConfig {
  std::size_t t_initial = 30;  // steps on the first class group
  std::size_t t_step = 5;      // steps on every later group
  double inner_lr = 0.001;
  std::size_t template_steps = 1;  // 1 for the method itself; other values are ablations

  void validate() const;
};

enum class OuterOptimizer { Adam, Sgd };

struct MetaTrainConfig {
  double outer_lr = 0.0001;
  std::size_t meta_iterations = 100;
  std::size_t tasks_per_meta_batch = 4;
  ScenarioSpec scenario;
  std::size_t test_per_class = kDefaultTestPerClass;
  std::uint64_t seed = 0;
  OuterOptimizer outer_optimizer = OuterOptimizer::Adam;

  void validate() const;
};

struct TemplateEntry {
  int class_id = 0;
  Tensor features;
  int head_index = 0;
};

/// One stored support example per class seen so far, in introduction order.
class TemplateStore {
 public:
  void add(TemplateEntry entry);
  bool contains(int class_id) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<TemplateEntry>& entries() const { return entries_; }
  /// All templates as one batch.
  LabeledBatch batch() const;

 private:
  std::vector<TemplateEntry> entries_;
};

enum class UpdateScope {
  Full,      // every parameter
  HeadOnly,  // prediction network only; feature extractor frozen
};

/// How a continual run adapts: which weights move and whether templates are replayed.
struct ContinualProcedure {
  UpdateScope scope = UpdateScope::Full;
  bool use_templates = true;

  static ContinualProcedure mamlcon() { return {UpdateScope::Full, true}; }
  static ContinualProcedure oml() { return {UpdateScope::HeadOnly, false}; }
  static ContinualProcedure plain_finetune() { return {UpdateScope::Full, false}; }
};

struct PhaseRecord {
  std::size_t group = 0;
  std::size_t classes_added = 0;
  std::size_t adapt_steps = 0;
  std::size_t template_steps = 0;
  std::size_t mask_count = 0;
  std::size_t store_size = 0;
  std::size_t optimizer_steps = 0;  // Adam step counter at the end of the phase
};

/// Post-group snapshots of a continual run.
struct Trajectory {
  std::vector<ParameterSet> snapshots;
  std::vector<ClassMask> masks;
  std::vector<PhaseRecord> phases;

  std::size_t size() const { return snapshots.size(); }
};

struct DeployedModel {
  ParameterSet params;
  ClassMask mask;
  TemplateStore store;
  AdamState optimizer;
};

struct ContinualRun {
  DeployedModel model;
  Trajectory trajectory;
};

struct AdaptResult {
  ParameterSet params;
  AdamState state;
};

/// `steps` full-batch Adam steps on the group's cross-entropy.
AdaptResult inner_adapt(const ParameterSet& params, const AdamState& state, const LabeledBatch& group,
                        const ClassMask& mask, std::size_t steps, double lr, const ModelConfig& model,
                        UpdateScope scope = UpdateScope::Full);

/// Appends one uniformly chosen support example for each class of `group`.
TemplateStore store_templates(const TemplateStore& store, const Episode& episode, std::size_t group,
                              std::mt19937_64& rng);

/// One Adam step on the mean loss over all templates. An empty store is a no-op.
AdaptResult template_step(const ParameterSet& params, const AdamState& state, const TemplateStore& store,
                          const ClassMask& mask, double lr, const ModelConfig& model,
                          UpdateScope scope = UpdateScope::Full);

/// Sequential class-group learning over an episode. Adam state starts fresh
/// and persists across groups.
ContinualRun run_continual(const ParameterSet& start, const Episode& episode, const InnerLoopConfig& inner,
                           const ModelConfig& model, const ContinualProcedure& procedure, std::mt19937_64& rng);

/// The MAMLCon inner loop used during meta-training.
ContinualRun mamlcon_inner_loop(const ParameterSet& theta0, const Episode& episode, const InnerLoopConfig& inner,
                                const ModelConfig& model, std::mt19937_64& rng);

/// Test-time deployment of meta-learned weights on an unseen episode.
ContinualRun continual_deploy(const ParameterSet& theta_star, const Episode& episode, const InnerLoopConfig& inner,
                              const ModelConfig& model, std::uint64_t seed,
                              const ContinualProcedure& procedure = ContinualProcedure::mamlcon());

/// Deployment from a fresh initialization (no meta-training). The init uses
/// an mt19937_64 seeded with `seed`; deployment then uses the next draw of
/// that generator as its seed.
ContinualRun finetune_baseline(const ModelConfig& model, const Episode& episode, const InnerLoopConfig& inner,
                               std::uint64_t seed, bool use_templates = true);

struct MetaTask {
  ParameterSet adapted;
  LabeledBatch test;
  ClassMask mask;
};

struct MetaGradient {
  GradientSet grad;  // sum over tasks
  double loss = 0.0; // sum over tasks
};

/// First-order meta-gradient: sum over tasks of dL(test; theta_T)/d theta_T.
MetaGradient meta_gradient(const std::vector<MetaTask>& tasks, const ModelConfig& model);

struct MetaUpdateResult {
  ParameterSet params;
  AdamState state;
  double meta_loss = 0.0;
};

/// Applies the summed first-order meta-gradient to theta0 with one outer step.
MetaUpdateResult fo_meta_update(const ParameterSet& theta0, const std::vector<MetaTask>& tasks,
                                const AdamState& state, double outer_lr, const ModelConfig& model,
                                OuterOptimizer optimizer = OuterOptimizer::Adam);

/// Called after every meta-iteration with (iteration, summed meta-test loss).
using MetaProgress = std::function<void(std::size_t, double)>;

ParameterSet mamlcon_meta_train(const LabeledDataset& data, const MetaTrainConfig& cfg, const InnerLoopConfig& inner,
                                const ModelConfig& model, const MetaProgress& progress = {});

ParameterSet oml_meta_train(const LabeledDataset& data, const MetaTrainConfig& cfg, const InnerLoopConfig& inner,
                            const ModelConfig& model, const MetaProgress& progress = {});

/// OML's meta-test batch: a random subset of the episode's classes, sampled
/// with replacement up to the size of the full test batch.
LabeledBatch oml_meta_test_batch(const Episode& episode, std::mt19937_64& rng);

}  // namespace mamlcon
