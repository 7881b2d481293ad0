#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mamlcon/tensor.hpp"

namespace mamlcon {

/// Which head classes are currently live. Masked-out classes take no part in
/// the softmax and receive no gradient.
class ClassMask {
 public:
  ClassMask() = default;
  explicit ClassMask(std::size_t classes, bool value = false) : bits_(classes, value) {}

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i]; }
  bool test(std::size_t i) const { return bits_.at(i); }
  void set(std::size_t i) { bits_.at(i) = true; }
  std::size_t count() const;
  /// True when every class live here is also live in `other`.
  bool subset_of(const ClassMask& other) const;

  bool operator==(const ClassMask&) const = default;

 private:
  std::vector<bool> bits_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Valid (unpadded) strided 2-D convolution.
/// input [C_in,H,W], kernels [C_out,C_in,kH,kW], bias [C_out] -> [C_out,H',W'].
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride);

struct Conv2dGrads {
  Tensor dinput;
  Tensor dkernels;
  Tensor dbias;
};

/// Gradients of conv2d_forward given the upstream gradient `doutput`.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                            const Tensor& doutput);

/// Output spatial extent of a valid convolution.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride);

/// y = W x + b for a batch: input [B,in], weight [out,in], bias [out] -> [B,out].
Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor dinput;
  Tensor dweight;
  Tensor dbias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& doutput);

Tensor relu_forward(const Tensor& x);
/// Passes gradient where the forward input was strictly positive.
Tensor relu_backward(const Tensor& forward_input, const Tensor& doutput);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean cross-entropy over the batch with masked-out classes excluded from the
/// softmax normalizer. `logits` is [B,C]; every label must be masked in.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, const ClassMask& mask);

/// Row-wise softmax restricted to the masked-in classes (zeros elsewhere).
Tensor masked_softmax(const Tensor& logits, const ClassMask& mask);

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct AdamState {
  MomentSet m;
  MomentSet v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like `params`, t = 0.
  static AdamState fresh(const ParameterSet& params);

  bool operator==(const AdamState&) const = default;
};

struct AdamResult {
  ParameterSet params;
  AdamState state;
};

/// One bias-corrected Adam step. Pure: inputs are not modified.
/// Throws std::domain_error naming the parameter if a gradient is not finite.
AdamResult adam_step(const ParameterSet& params, const GradientSet& grads, const AdamState& state, double lr);

/// params - lr * grads.
ParameterSet sgd_step(const ParameterSet& params, const GradientSet& grads, double lr);

// ---------------------------------------------------------------------------
// Gradient utilities
// ---------------------------------------------------------------------------

using ScalarLoss = std::function<double(const ParameterSet&)>;

/// Central differences (f(p+h) - f(p-h)) / 2h for every parameter entry.
GradientSet finite_diff_grad(const ScalarLoss& loss_fn, const ParameterSet& params, double h);

/// Elementwise sum of gradient sets with identical layout.
GradientSet add_gradients(const GradientSet& a, const GradientSet& b);

/// Largest |a-n| / max(|a|, |n|, floor) over all entries.
double max_relative_error(const GradientSet& analytic, const GradientSet& numeric, double floor = 1e-8);

}  // namespace mamlcon
