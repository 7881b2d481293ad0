#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mamlcon/checkpoint.hpp"
#include "mamlcon/config.hpp"
#include "mamlcon/episodes.hpp"
#include "mamlcon/metalearn.hpp"

namespace mamlcon {

/// Predicted head index for every row of a batch.
using Classifier =
    std::function<std::vector<int>(const ParameterSet& params, const ClassMask& mask, const LabeledBatch& batch)>;

/// argmax_masked over the model's logits.
Classifier model_classifier(const ModelConfig& model);

struct GroupRetention {
  std::size_t first_label = 0;  // 1-based position of the group's first class in learning order
  std::size_t last_label = 0;
  std::size_t test_items = 0;
  double start = 0.0;  // S: accuracy right after the group was learned
  double end = 0.0;    // E: accuracy of the final model
  double delta = 0.0;  // E - S
  bool last = false;   // learned last: S and E come from the same model
};

struct RetentionReport {
  std::vector<GroupRetention> groups;
  double overall = 0.0;  // final-model accuracy over every test example
};

/// Per-group start/end accuracies (percent) of a continual run.
RetentionReport evaluate_retention(const Trajectory& trajectory, const DeployedModel& final_model,
                                   const Episode& episode, const Classifier& classify);

/// One CSV line: per-episode means for one (configuration, seed), or a
/// seed-mean summary when `seed` is empty.
struct ResultRow {
  std::string algorithm;
  std::string dataset;
  std::string scenario;
  std::size_t k = 0;
  std::optional<std::uint64_t> seed;
  std::size_t episodes = 0;
  double accuracy = 0.0;
  std::vector<double> group_start;
  std::vector<double> group_end;
  std::vector<double> group_delta;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kCsvHeader =
    "algorithm,dataset,scenario,k,seed,episodes,accuracy,n_groups,group_start,group_end,group_delta";

std::string format_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> parse_csv(const std::string& text);
void write_csv(std::span<const ResultRow> rows, const std::filesystem::path& path);
std::vector<ResultRow> read_csv(const std::filesystem::path& path);

/// Mean over rows that share algorithm, dataset, scenario and K.
ResultRow summarize(std::span<const ResultRow> rows);

struct DatasetPair {
  LabeledDataset train;  // meta-training classes (empty when not needed)
  LabeledDataset test;   // held-out evaluation classes
};

DatasetPair load_datasets(const RunConfig& cfg);

/// Throws DataError unless `data` can supply an episode of the scenario.
void require_episode_capacity(const LabeledDataset& data, const ScenarioSpec& spec, std::size_t test_per_class,
                              const std::string& what);

/// Model configuration with the input shape taken from the data.
ModelConfig resolve_model(const RunConfig& cfg, const LabeledDataset& data);

/// Meta-trains `cfg.algorithm` (mamlcon or oml) with the given seed.
Checkpoint train_checkpoint(const RunConfig& cfg, const DatasetPair& data, std::uint64_t seed,
                            const MetaProgress& progress = {});

struct ExperimentOptions {
  /// Evaluate these weights instead of meta-training per seed.
  std::optional<Checkpoint> checkpoint;
  /// Called as (seed, iteration, meta-loss); may run on worker threads.
  std::function<void(std::uint64_t, std::size_t, double)> progress;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // one per seed, in cfg.seeds order
  ResultRow summary;
};

/// Meta-train (unless algorithm is none or a checkpoint is given), deploy on
/// episodes_per_eval held-out episodes per seed, and aggregate. Seeds run
/// concurrently; output order and values do not depend on scheduling.
/// Writes cfg.csv and its `.meta.json` sidecar when cfg.csv is set.
ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options = {});

/// One seed-mean summary row per K; meta-training is repeated for each K.
std::vector<ResultRow> sweep_k(const RunConfig& cfg, std::span<const std::size_t> ks,
                               const ExperimentOptions& options = {});

/// Writes `<csv>.meta.json` with the config, its hash, the seeds and wall time.
void write_sidecar(const RunConfig& cfg, const std::filesystem::path& csv, double wall_seconds);

}  // namespace mamlcon
