#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mamlcon/models.hpp"
#include "test_util.hpp"

using namespace mamlcon;
using mamlcon::testing::mask_of;
using mamlcon::testing::random_tensor;
using mamlcon::testing::small_conv;
using mamlcon::testing::small_mlp;

namespace {

double model_loss(const ParameterSet& p, const Tensor& x, const std::vector<int>& y, const ClassMask& m,
                  const ModelConfig& cfg) {
  return softmax_cross_entropy(predict(p, x, m, cfg).logits, y, m).loss;
}

GradientSet model_grad(const ParameterSet& p, const Tensor& x, const std::vector<int>& y, const ClassMask& m,
                       const ModelConfig& cfg) {
  auto pred = predict(p, x, m, cfg);
  return model_backward(pred.tape, softmax_cross_entropy(pred.logits, y, m).dlogits);
}

}  // namespace

TEST(ModelConfigTest, DefaultConvShapeArithmetic) {
  ModelConfig cfg;
  cfg.head_classes = 50;
  const auto shapes = cfg.parameter_shapes();
  ASSERT_EQ(shapes.size(), 8u);
  // 101 -> 50 -> 24 -> 11 frames, 39 -> 19 -> 9 -> 4 coefficients.
  const std::vector<std::pair<std::string, Shape>> expected{
      {"conv1.weight", {16, 1, 3, 3}}, {"conv1.bias", {16}},    {"conv2.weight", {32, 16, 3, 3}},
      {"conv2.bias", {32}},            {"conv3.weight", {64, 32, 3, 3}}, {"conv3.bias", {64}},
      {"head.weight", {50, 64 * 11 * 4}}, {"head.bias", {50}}};
  EXPECT_EQ(shapes, expected);
  EXPECT_EQ(cfg.feature_size(), 2816u);
}

TEST(ModelConfigTest, NamePartition) {
  for (const ModelConfig& cfg : {ModelConfig{}, small_mlp(4, 3, {5, 6})}) {
    const auto fe = cfg.fe_param_names(), pn = cfg.pn_param_names();
    EXPECT_EQ(pn, (std::vector<std::string>{"head.weight", "head.bias"}));
    std::vector<std::string> all = fe;
    all.insert(all.end(), pn.begin(), pn.end());
    std::vector<std::string> names;
    for (const auto& [n, s] : cfg.parameter_shapes()) names.push_back(n);
    std::sort(all.begin(), all.end());
    std::sort(names.begin(), names.end());
    EXPECT_EQ(all, names);
  }
}

TEST(ModelConfigTest, RejectsTooSmallInput) {
  ModelConfig cfg;
  cfg.input_shape = {1, 12, 39};
  EXPECT_THROW(cfg.validate(), ConfigError);
  std::mt19937_64 rng(0);
  EXPECT_THROW(init_params(cfg, rng), ConfigError);
  cfg.input_shape = {1, 15, 15};
  EXPECT_NO_THROW(cfg.validate());
}

TEST(InitParams, DeterministicPerSeed) {
  const ModelConfig cfg = small_conv();
  std::mt19937_64 a(11), b(11), c(12);
  const auto pa = init_params(cfg, a), pb = init_params(cfg, b), pc = init_params(cfg, c);
  EXPECT_EQ(pa, pb);
  EXPECT_NE(pa, pc);
}

TEST(InitParams, KaimingUniformBoundsAndZeroBias) {
  ModelConfig cfg;
  std::mt19937_64 rng(3);
  const auto p = init_params(cfg, rng);
  for (const auto& [name, t] : p) {
    if (name.ends_with(".bias")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0);
      continue;
    }
    const std::size_t fan_in = t.size() / t.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    double lo = 0, hi = 0;
    for (double v : t.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_GE(lo, -bound) << name;
    EXPECT_LE(hi, bound) << name;
    EXPECT_LT(lo, -0.5 * bound) << name;
    EXPECT_GT(hi, 0.5 * bound) << name;
  }
}

TEST(Predict, SingleLiveClassWinsArgmax) {
  const ModelConfig cfg = small_conv(5);
  std::mt19937_64 rng(1);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_tensor({6, 1, 15, 15}, rng);
  const auto mask = mask_of(5, {3});
  const auto pred = predict(p, x, mask, cfg);
  for (int y : argmax_masked(pred.logits, mask)) EXPECT_EQ(y, 3);
  for (std::size_t b = 0; b < 6; ++b)
    for (std::size_t c = 0; c < 5; ++c)
      if (c != 3) { EXPECT_EQ(pred.logits[b * 5 + c], -std::numeric_limits<double>::infinity()); }
}

TEST(Predict, WideningMaskKeepsLiveLogits) {
  const ModelConfig cfg = small_conv(6);
  std::mt19937_64 rng(2);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_tensor({3, 1, 15, 15}, rng);
  const auto narrow = mask_of(6, {0, 4});
  const auto wide = mask_of(6, {0, 2, 4, 5});
  const auto a = predict(p, x, narrow, cfg).logits, b = predict(p, x, wide, cfg).logits;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c : {0u, 4u}) EXPECT_EQ(a[i * 6 + c], b[i * 6 + c]);
}

TEST(Predict, BatchEqualsPerItem) {
  const ModelConfig cfg = small_conv(4);
  std::mt19937_64 rng(3);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_tensor({2, 1, 15, 15}, rng);
  const ClassMask mask(4, true);
  const Tensor both = predict(p, x, mask, cfg).logits;
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor one = predict(p, x.slice(i).reshaped({1, 1, 15, 15}), mask, cfg).logits;
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(both[i * 4 + c], one[c], 1e-12);
  }
}

TEST(Predict, ShapeMismatchThrows) {
  const ModelConfig cfg = small_conv(4);
  std::mt19937_64 rng(4);
  const auto p = init_params(cfg, rng);
  EXPECT_THROW(predict(p, Tensor({1, 1, 14, 15}), ClassMask(4, true), cfg), ShapeError);
  EXPECT_THROW(predict(p, Tensor({1, 1, 15, 15}), ClassMask(3, true), cfg), ShapeError);
}

TEST(Predict, ArgmaxNeverPicksMaskedOut) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor logits = random_tensor({4, 7}, rng, -5, 5);
    ClassMask m(7);
    m.set(static_cast<std::size_t>(trial % 7));
    if (trial % 3 == 0) m.set((static_cast<std::size_t>(trial) * 5) % 7);
    for (int y : argmax_masked(logits, m)) EXPECT_TRUE(m[static_cast<std::size_t>(y)]);
  }
}

TEST(ModelBackward, ConvModelMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ModelConfig cfg = small_conv(5);
    std::mt19937_64 rng(seed);
    const auto p = init_params(cfg, rng);
    const Tensor x = random_tensor({3, 1, 15, 15}, rng);
    const std::vector<int> y{0, 2, 4};
    const auto mask = mask_of(5, {0, 2, 3, 4});
    const auto analytic = model_grad(p, x, y, mask, cfg);
    const auto numeric = finite_diff_grad([&](const ParameterSet& q) { return model_loss(q, x, y, mask, cfg); }, p, 1e-5);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-6);
  }
}

TEST(ModelBackward, MlpModelMatchesFiniteDifferences) {
  const ModelConfig cfg = small_mlp(6, 4, {7, 5});
  std::mt19937_64 rng(9);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_tensor({5, 1, 1, 6}, rng);
  const std::vector<int> y{0, 1, 3, 1, 0};
  const auto mask = mask_of(4, {0, 1, 3});
  const auto numeric = finite_diff_grad([&](const ParameterSet& q) { return model_loss(q, x, y, mask, cfg); }, p, 1e-5);
  EXPECT_LT(max_relative_error(model_grad(p, x, y, mask, cfg), numeric), 1e-6);
}

TEST(ModelBackward, MaskedHeadRowsGetExactZeros) {
  const ModelConfig cfg = small_conv(5);
  std::mt19937_64 rng(6);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_tensor({2, 1, 15, 15}, rng);
  const auto g = model_grad(p, x, {1, 3}, mask_of(5, {1, 3}), cfg);
  const auto& w = g.at("head.weight");
  const std::size_t f = cfg.feature_size();
  for (std::size_t c : {0u, 2u, 4u}) {
    for (std::size_t j = 0; j < f; ++j) EXPECT_EQ(w[c * f + j], 0.0);
    EXPECT_EQ(g.at("head.bias")[c], 0.0);
  }
}

TEST(ModelBackward, ZeroUpstreamGivesZeroGradients) {
  const ModelConfig cfg = small_conv(3);
  std::mt19937_64 rng(7);
  const auto p = init_params(cfg, rng);
  const auto pred = predict(p, random_tensor({2, 1, 15, 15}, rng), ClassMask(3, true), cfg);
  const auto g = model_backward(pred.tape, Tensor({2, 3}));
  EXPECT_TRUE(g.same_layout(p));
  for (const auto& [name, t] : g)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(ModelBackward, WrongUpstreamShapeThrows) {
  const ModelConfig cfg = small_conv(3);
  std::mt19937_64 rng(8);
  const auto p = init_params(cfg, rng);
  const auto pred = predict(p, random_tensor({2, 1, 15, 15}, rng), ClassMask(3, true), cfg);
  EXPECT_THROW(model_backward(pred.tape, Tensor({2, 4})), ShapeError);
}

TEST(SplitParams, LosslessPartition) {
  const ModelConfig cfg;
  std::mt19937_64 rng(1);
  const auto p = init_params(cfg, rng);
  const auto s = split_params(p, cfg);
  EXPECT_EQ(s.pn.names(), (std::vector<std::string>{"head.weight", "head.bias"}));
  EXPECT_EQ(s.fe.numel(), p.numel() - p.at("head.weight").size() - p.at("head.bias").size());
  EXPECT_EQ(merge_params(s.fe, s.pn, cfg), p);
}

TEST(SplitParams, UnknownNameThrows) {
  const ModelConfig cfg = small_mlp(3, 2);
  std::mt19937_64 rng(2);
  auto p = init_params(cfg, rng);
  p.add("extra", Tensor({1}));
  EXPECT_THROW(split_params(p, cfg), std::invalid_argument);
}
