#include "mamlcon/models.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace mamlcon {

std::string to_string(Architecture arch) { return arch == Architecture::Conv ? "conv" : "mlp"; }

Architecture architecture_from_string(const std::string& text) {
  if (text == "conv") return Architecture::Conv;
  if (text == "mlp") return Architecture::Mlp;
  throw ConfigError("unknown architecture '" + text + "' (expected conv or mlp)");
}

void ModelConfig::validate() const {
  for (auto d : input_shape)
    if (d == 0) throw ConfigError("input shape dimensions must be positive");
  if (head_classes == 0) throw ConfigError("head must have at least one class");
  if (architecture == Architecture::Conv) {
    for (auto c : conv_channels)
      if (c == 0) throw ConfigError("conv channel counts must be positive");
    if (kernel[0] == 0 || kernel[1] == 0 || stride == 0) throw ConfigError("kernel and stride must be positive");
    std::size_t h = input_shape[1], w = input_shape[2];
    for (int layer = 0; layer < 3; ++layer) {
      if (h < kernel[0] || w < kernel[1])
        throw ConfigError("input " + std::to_string(input_shape[1]) + "x" + std::to_string(input_shape[2]) +
                          " is too small for three valid " + std::to_string(kernel[0]) + "x" +
                          std::to_string(kernel[1]) + " stride-" + std::to_string(stride) + " convolutions");
      h = (h - kernel[0]) / stride + 1;
      w = (w - kernel[1]) / stride + 1;
    }
  } else {
    for (auto hdim : hidden)
      if (hdim == 0) throw ConfigError("hidden widths must be positive");
  }
}

std::vector<LayerSpec> ModelConfig::layers() const {
  std::vector<LayerSpec> out;
  if (architecture == Architecture::Conv) {
    for (int i = 1; i <= 3; ++i) {
      out.push_back({LayerKind::Conv2d, "conv" + std::to_string(i), stride});
      out.push_back({LayerKind::Relu, "", 1});
    }
    out.push_back({LayerKind::Flatten, "", 1});
  } else {
    out.push_back({LayerKind::Flatten, "", 1});
    for (std::size_t i = 1; i <= hidden.size(); ++i) {
      out.push_back({LayerKind::Dense, "fc" + std::to_string(i), 1});
      out.push_back({LayerKind::Relu, "", 1});
    }
  }
  out.push_back({LayerKind::Dense, kHeadName, 1});
  return out;
}

std::size_t ModelConfig::feature_size() const {
  if (architecture == Architecture::Conv) {
    std::size_t h = input_shape[1], w = input_shape[2];
    for (int i = 0; i < 3; ++i) {
      h = conv_output_extent(h, kernel[0], stride);
      w = conv_output_extent(w, kernel[1], stride);
    }
    return conv_channels[2] * h * w;
  }
  if (!hidden.empty()) return hidden.back();
  return input_shape[0] * input_shape[1] * input_shape[2];
}

std::vector<std::pair<std::string, Shape>> ModelConfig::parameter_shapes() const {
  validate();
  std::vector<std::pair<std::string, Shape>> out;
  if (architecture == Architecture::Conv) {
    std::size_t c_in = input_shape[0];
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string name = "conv" + std::to_string(i + 1);
      out.emplace_back(name + ".weight", Shape{conv_channels[i], c_in, kernel[0], kernel[1]});
      out.emplace_back(name + ".bias", Shape{conv_channels[i]});
      c_in = conv_channels[i];
    }
  } else {
    std::size_t n_in = input_shape[0] * input_shape[1] * input_shape[2];
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      const std::string name = "fc" + std::to_string(i + 1);
      out.emplace_back(name + ".weight", Shape{hidden[i], n_in});
      out.emplace_back(name + ".bias", Shape{hidden[i]});
      n_in = hidden[i];
    }
  }
  out.emplace_back(std::string(kHeadName) + ".weight", Shape{head_classes, feature_size()});
  out.emplace_back(std::string(kHeadName) + ".bias", Shape{head_classes});
  return out;
}

std::vector<std::string> ModelConfig::pn_param_names() const {
  return {std::string(kHeadName) + ".weight", std::string(kHeadName) + ".bias"};
}

std::vector<std::string> ModelConfig::fe_param_names() const {
  std::vector<std::string> out;
  const auto pn = pn_param_names();
  for (const auto& [name, shape] : parameter_shapes())
    if (name != pn[0] && name != pn[1]) out.push_back(name);
  return out;
}

ParameterSet init_params(const ModelConfig& config, std::mt19937_64& rng) {
  ParameterSet params;
  for (const auto& [name, shape] : config.parameter_shapes()) {
    Tensor t(shape);
    if (shape.size() > 1) {
      const std::size_t fan_in = shape_numel(shape) / shape[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.data()) v = dist(rng);
    }
    params.add(name, std::move(t));
  }
  return params;
}

namespace {

const Tensor& param(const ParameterSet& params, const std::string& name) {
  const auto* t = params.find(name);
  if (!t) throw std::invalid_argument("parameter '" + name + "' is missing");
  return *t;
}

Tensor conv_batch_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  std::vector<Tensor> outs;
  outs.reserve(x.dim(0));
  for (std::size_t i = 0; i < x.dim(0); ++i) outs.push_back(conv2d_forward(x.slice(i), w, b, stride));
  return Tensor::stack(outs);
}

Tensor flatten(const Tensor& x) { return x.reshaped({x.dim(0), x.size() / x.dim(0)}); }

}  // namespace

Prediction predict(const ParameterSet& params, const Tensor& batch, const ClassMask& mask, const ModelConfig& config) {
  const auto& in = config.input_shape;
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2])
    throw ShapeError("batch " + shape_to_string(batch.shape()) + " does not match model input [B," +
                     std::to_string(in[0]) + "," + std::to_string(in[1]) + "," + std::to_string(in[2]) + "]");
  if (mask.size() != config.head_classes)
    throw ShapeError("mask has " + std::to_string(mask.size()) + " entries, head has " +
                     std::to_string(config.head_classes));

  Prediction out;
  out.tape.layers = config.layers();
  out.tape.params = params;
  out.tape.mask = mask;
  Tensor x = batch;
  for (const auto& layer : out.tape.layers) {
    out.tape.layer_inputs.push_back(x);
    switch (layer.kind) {
      case LayerKind::Conv2d:
        x = conv_batch_forward(x, param(params, layer.name + ".weight"), param(params, layer.name + ".bias"),
                               layer.stride);
        break;
      case LayerKind::Dense:
        x = dense_forward(x, param(params, layer.name + ".weight"), param(params, layer.name + ".bias"));
        break;
      case LayerKind::Relu:
        x = relu_forward(x);
        break;
      case LayerKind::Flatten:
        x = flatten(x);
        break;
    }
  }
  const std::size_t classes = x.dim(1);
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t c = 0; c < classes; ++c)
      if (!mask[c]) x[r * classes + c] = -std::numeric_limits<double>::infinity();
  out.logits = std::move(x);
  return out;
}

std::vector<int> argmax_masked(const Tensor& logits, const ClassMask& mask) {
  if (logits.rank() != 2 || mask.size() != logits.dim(1)) throw ShapeError("argmax: mask/logit mismatch");
  if (mask.count() == 0) throw std::invalid_argument("argmax over an empty class mask");
  std::vector<int> out(logits.dim(0));
  const std::size_t classes = logits.dim(1);
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    int best = -1;
    double best_value = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!mask[c]) continue;
      const double v = logits[r * classes + c];
      if (best < 0 || v > best_value) best = static_cast<int>(c), best_value = v;
    }
    out[r] = best;
  }
  return out;
}

GradientSet model_backward(const ForwardTape& tape, const Tensor& dlogits) {
  if (tape.layer_inputs.size() != tape.layers.size()) throw std::invalid_argument("tape is incomplete");
  const auto& last = tape.layers.back();
  const Tensor& head_w = param(tape.params, last.name + ".weight");
  const std::size_t batch = tape.layer_inputs.front().dim(0);
  if (dlogits.shape() != Shape{batch, head_w.dim(0)})
    throw ShapeError("dlogits " + shape_to_string(dlogits.shape()) + " does not match tape output [" +
                     std::to_string(batch) + "," + std::to_string(head_w.dim(0)) + "]");
  if (tape.mask.size() != head_w.dim(0)) throw ShapeError("tape mask does not match head size");

  GradientSet grads = GradientSet::zeros_like(tape.params);
  Tensor upstream = dlogits;
  const std::size_t classes = head_w.dim(0);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < classes; ++c)
      if (!tape.mask[c]) upstream[r * classes + c] = 0.0;

  for (std::size_t li = tape.layers.size(); li-- > 0;) {
    const auto& layer = tape.layers[li];
    const Tensor& input = tape.layer_inputs[li];
    switch (layer.kind) {
      case LayerKind::Conv2d: {
        const Tensor& w = param(tape.params, layer.name + ".weight");
        Tensor& gw = grads.at(layer.name + ".weight");
        Tensor& gb = grads.at(layer.name + ".bias");
        std::vector<Tensor> dinputs;
        dinputs.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
          auto g = conv2d_backward(input.slice(i), w, layer.stride, upstream.slice(i));
          for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += g.dkernels[k];
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g.dbias[k];
          dinputs.push_back(std::move(g.dinput));
        }
        upstream = Tensor::stack(dinputs);
        break;
      }
      case LayerKind::Dense: {
        auto g = dense_backward(input, param(tape.params, layer.name + ".weight"), upstream);
        grads.at(layer.name + ".weight") = std::move(g.dweight);
        grads.at(layer.name + ".bias") = std::move(g.dbias);
        upstream = std::move(g.dinput);
        break;
      }
      case LayerKind::Relu:
        upstream = relu_backward(input, upstream);
        break;
      case LayerKind::Flatten:
        upstream = upstream.reshaped(input.shape());
        break;
    }
  }
  return grads;
}

ParamSplit split_params(const ParameterSet& params, const ModelConfig& config) {
  const auto pn_names = config.pn_param_names();
  const auto fe_names = config.fe_param_names();
  const std::set<std::string> pn_set(pn_names.begin(), pn_names.end());
  const std::set<std::string> fe_set(fe_names.begin(), fe_names.end());
  ParamSplit out;
  for (const auto& [name, t] : params) {
    if (pn_set.count(name))
      out.pn.add(name, t);
    else if (fe_set.count(name))
      out.fe.add(name, t);
    else
      throw std::invalid_argument("unknown parameter '" + name + "' for this model configuration");
  }
  return out;
}

ParameterSet merge_params(const ParameterSet& fe, const ParameterSet& pn, const ModelConfig& config) {
  ParameterSet out;
  for (const auto& [name, shape] : config.parameter_shapes()) {
    const Tensor* t = fe.find(name);
    if (!t) t = pn.find(name);
    if (!t) throw std::invalid_argument("parameter '" + name + "' missing from both partitions");
    out.add(name, *t);
  }
  if (out.size() != fe.size() + pn.size()) throw std::invalid_argument("partitions contain unknown parameters");
  return out;
}

}  // namespace mamlcon
