#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mamlcon/episodes.hpp"
#include "mamlcon/metalearn.hpp"
#include "mamlcon/models.hpp"
#include "mamlcon/synthetic.hpp"

namespace mamlcon {

enum class Algorithm { Mamlcon, Oml, None };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view text);

/// Where episodes come from. Synthetic data is split by class id: the first
/// `train_classes` classes are meta-training classes, the rest are held out.
struct DatasetConfig {
  enum class Kind { Synthetic, Archive };
  Kind kind = Kind::Synthetic;
  SyntheticSpec synthetic;
  std::size_t train_classes = 20;
  std::string train_archive;  // Kind::Archive
  std::string test_archive;   // Kind::Archive

  /// Short label used in CSV rows.
  std::string label() const;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::Mamlcon;
  std::string scenario = "N6:CS2:CA2";
  std::size_t k = 5;
  DatasetConfig dataset;
  ModelConfig model = [] {
    ModelConfig m;
    m.architecture = Architecture::Mlp;
    m.head_classes = 6;
    return m;
  }();
  InnerLoopConfig inner;
  MetaTrainConfig meta = [] {
    MetaTrainConfig m;
    m.meta_iterations = 300;
    return m;
  }();  // meta.scenario and meta.seed are filled per run
  std::size_t episodes_per_eval = 20;
  std::size_t test_per_class = kDefaultTestPerClass;
  std::vector<std::uint64_t> seeds{0};
  bool baseline_templates = true;  // algorithm=none replays templates like MAMLCon
  std::string csv;                 // empty: no CSV written
  std::size_t threads = 0;         // 0: hardware concurrency

  ScenarioSpec scenario_spec() const;
  void validate() const;
};

/// JSON config text to RunConfig. Missing keys keep their defaults; unknown
/// keys are rejected. `model.head_classes` defaults to the scenario's N.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON rendering (sorted keys, no whitespace).
std::string dump_run_config(const RunConfig& cfg);

/// 64-bit FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace mamlcon
