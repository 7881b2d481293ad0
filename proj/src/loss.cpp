#include <cmath>
#include <limits>
#include <stdexcept>

#include "mamlcon/nncore.hpp"

namespace mamlcon {

namespace {

void check_logits(const Tensor& logits, const ClassMask& mask) {
  if (logits.rank() != 2) throw ShapeError("logits must be [B,C], got " + shape_to_string(logits.shape()));
  if (mask.size() != logits.dim(1))
    throw ShapeError("mask covers " + std::to_string(mask.size()) + " classes, logits have " +
                     std::to_string(logits.dim(1)));
  if (mask.count() == 0) throw std::invalid_argument("class mask has no live classes");
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const ClassMask& mask) {
  check_logits(logits, mask);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = &logits.data()[b * classes];
    double* p = &probs.data()[b * classes];
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c)
      if (mask[c]) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!mask[c]) continue;
      p[c] = std::exp(z[c] - zmax);
      denom += p[c];
    }
    for (std::size_t c = 0; c < classes; ++c)
      if (mask[c]) p[c] /= denom;
  }
  return probs;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, const ClassMask& mask) {
  check_logits(logits, mask);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch)
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(batch));
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes || !mask[static_cast<std::size_t>(y)])
      throw std::invalid_argument("label " + std::to_string(y) + " at batch position " + std::to_string(b) +
                                  " is not a live class");
  }

  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = &logits.data()[b * classes];
    double* g = &r.dlogits.data()[b * classes];
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c)
      if (mask[c]) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      if (mask[c]) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    const auto y = static_cast<std::size_t>(labels[b]);
    r.loss += (log_denom - (z[y] - zmax)) * inv_batch;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!mask[c]) continue;
      const double p = std::exp(z[c] - zmax - log_denom);
      g[c] = (p - (c == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return r;
}

}  // namespace mamlcon
