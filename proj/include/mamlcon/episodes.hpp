#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mamlcon/errors.hpp"
#include "mamlcon/tensor.hpp"

namespace mamlcon {

/// N:CS:CA continual-learning scenario plus the shot count K.
struct ScenarioSpec {
  std::size_t n_final = 0;
  std::size_t cs = 0;
  std::size_t ca = 0;
  std::size_t k = 0;

  void validate() const;
  /// "N<n>:CS<cs>:CA<ca>"
  std::string notation() const;

  bool operator==(const ScenarioSpec&) const = default;
};

/// Parses `N<digits>:CS<digits>:CA<digits>` (case-sensitive, no whitespace).
ScenarioSpec parse_scenario(std::string_view text, std::size_t k);

/// Group sizes: cs first, then ca per step, the last one clamped so the sizes sum to n_final.
std::vector<std::size_t> class_schedule(const ScenarioSpec& spec);

/// Examples grouped by class. Each example is a [frames, coeffs] tensor.
struct LabeledDataset {
  std::map<int, std::vector<Tensor>> classes;
  std::size_t frames = 0;
  std::size_t coeffs = 0;

  std::vector<int> class_ids() const;
  std::size_t total_examples() const;
  /// Dataset restricted to the given classes.
  LabeledDataset subset(std::span<const int> ids) const;
};

struct ClassSamples {
  int class_id = 0;
  std::vector<Tensor> support;
  std::vector<Tensor> test;
};

struct Episode {
  std::vector<std::vector<ClassSamples>> groups;
  std::map<int, int> label_map;  // class_id -> head index
  std::size_t n_max = 0;

  int head_index(int class_id) const;
  std::size_t class_count() const;
  std::vector<int> class_ids() const;
};

struct LabeledBatch {
  Tensor inputs;            // [B, 1, frames, coeffs]
  std::vector<int> labels;  // head indices
  std::size_t size() const { return labels.size(); }
};

LabeledBatch support_batch(const Episode& episode, std::size_t group);
LabeledBatch test_batch(const Episode& episode, std::size_t group);
/// Test examples of every class in the episode, group order.
LabeledBatch full_test_batch(const Episode& episode);

/// Stacks [frames, coeffs] examples into a [B, 1, frames, coeffs] model batch.
LabeledBatch make_batch(std::span<const Tensor> examples, std::span<const int> labels);

inline constexpr std::size_t kDefaultTestPerClass = 5;

/// Draws n_final distinct classes, K support and `test_per_class` test
/// examples per class (disjoint), grouped by the class schedule, with a
/// fresh random label map into [0, n_max).
Episode sample_episode(const LabeledDataset& data, const ScenarioSpec& spec, std::size_t n_max, std::mt19937_64& rng,
                       std::size_t test_per_class = kDefaultTestPerClass);

/// New random injective label map; samples untouched.
Episode shuffle_labels(const Episode& episode, std::mt19937_64& rng);

}  // namespace mamlcon
