#include "mamlcon/synthetic.hpp"

#include <cmath>
#include <random>

#include "mamlcon/errors.hpp"

namespace mamlcon {

void SyntheticSpec::validate() const {
  if (n_classes == 0 || dim == 0 || examples_per_class == 0)
    throw ConfigError("synthetic classes, dim and examples per class must be positive");
  if (!(cluster_separation > 0.0)) throw ConfigError("cluster separation must be positive");
}

FeatureArchive synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double radius = spec.cluster_separation / std::sqrt(2.0);

  FeatureArchive a;
  a.n_coeffs = spec.dim;
  a.meta = {{"kind", "synthetic"},
            {"dim", std::to_string(spec.dim)},
            {"seed", std::to_string(spec.seed)}};
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const int id = static_cast<int>(c);
    a.classes[id] = "class" + std::to_string(c);

    std::vector<double> mean(spec.dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& m : mean) {
        m = normal(rng);
        norm += m * m;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& m : mean) m *= radius / norm;

    for (std::size_t e = 0; e < spec.examples_per_class; ++e) {
      std::vector<double> x(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) x[d] = mean[d] + normal(rng);
      a.records.push_back({"c" + std::to_string(c) + "_e" + std::to_string(e), id, Tensor({1, spec.dim}, std::move(x))});
    }
  }
  return a;
}

}  // namespace mamlcon
