#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mamlcon/errors.hpp"
#include "mamlcon/nncore.hpp"
#include "mamlcon/tensor.hpp"

namespace mamlcon {

enum class Architecture {
  Conv,  // three strided valid conv + ReLU blocks, flatten, dense head
  Mlp,   // flatten, ReLU hidden layers, dense head
};

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& text);

enum class LayerKind { Conv2d, Dense, Relu, Flatten };

struct LayerSpec {
  LayerKind kind;
  std::string name;  // parameter prefix for Conv2d / Dense
  std::size_t stride = 1;
};

inline constexpr const char* kHeadName = "head";

struct ModelConfig {
  Architecture architecture = Architecture::Conv;
  /// (channels, frames, coeffs)
  std::array<std::size_t, 3> input_shape{1, 101, 39};
  std::array<std::size_t, 3> conv_channels{16, 32, 64};
  std::array<std::size_t, 2> kernel{3, 3};
  std::size_t stride = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t head_classes = 5;

  /// Throws ConfigError on an unusable configuration.
  void validate() const;

  std::vector<LayerSpec> layers() const;
  /// (name, shape) for every parameter, in forward order.
  std::vector<std::pair<std::string, Shape>> parameter_shapes() const;
  /// Width of the vector fed into the head.
  std::size_t feature_size() const;

  std::vector<std::string> fe_param_names() const;
  std::vector<std::string> pn_param_names() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Kaiming-uniform weights, zero biases.
ParameterSet init_params(const ModelConfig& config, std::mt19937_64& rng);

/// Everything model_backward needs to replay a forward pass.
struct ForwardTape {
  std::vector<LayerSpec> layers;
  std::vector<Tensor> layer_inputs;  // batched input seen by each layer
  ParameterSet params;
  ClassMask mask;
};

struct Prediction {
  Tensor logits;  // [B, head_classes]; masked-out columns are -inf
  ForwardTape tape;
};

/// Forward pass over a batch [B, channels, frames, coeffs].
Prediction predict(const ParameterSet& params, const Tensor& batch, const ClassMask& mask, const ModelConfig& config);

/// Argmax over masked-in classes for each row of `logits`.
std::vector<int> argmax_masked(const Tensor& logits, const ClassMask& mask);

/// Reverse pass. Masked-out logit columns are treated as zero upstream gradient.
GradientSet model_backward(const ForwardTape& tape, const Tensor& dlogits);

struct ParamSplit {
  ParameterSet fe;  // feature extractor
  ParameterSet pn;  // prediction network (the dense head)
};

ParamSplit split_params(const ParameterSet& params, const ModelConfig& config);
ParameterSet merge_params(const ParameterSet& fe, const ParameterSet& pn, const ModelConfig& config);

}  // namespace mamlcon
