#pragma once

#include <cstddef>
#include <cstdint>

#include "mamlcon/archive.hpp"

namespace mamlcon {

/// Gaussian-cluster classification data for small, fast experiments.
struct SyntheticSpec {
  std::size_t n_classes = 30;
  std::size_t dim = 16;
  std::size_t examples_per_class = 20;
  /// Distance between class means in units of the within-class standard deviation.
  double cluster_separation = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class means lie on a sphere of radius separation/sqrt(2); examples are
/// mean + N(0, I). Records are [1, dim].
FeatureArchive synth_generate(const SyntheticSpec& spec);

}  // namespace mamlcon
