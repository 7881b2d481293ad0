#include <gtest/gtest.h>

#include <filesystem>
#include <unistd.h>
#include <random>

#include "mamlcon/archive.hpp"
#include "mamlcon/checkpoint.hpp"
#include "test_util.hpp"

using namespace mamlcon;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mamlcon_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

Checkpoint make_checkpoint(const ModelConfig& m, std::uint64_t seed) {
  Checkpoint c;
  c.model = m;
  c.algorithm = "mamlcon";
  std::mt19937_64 rng(seed);
  c.params = init_params(m, rng);
  c.extra = {{"seed", std::to_string(seed)}, {"scenario", "N6:CS2:CA2"}};
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripMlp) {
  const auto c = make_checkpoint(mamlcon::testing::small_mlp(16, 6, {64, 32}), 3);
  const auto p = temp_file("mlp.ckpt");
  save_checkpoint(c, p);
  const auto back = load_checkpoint(p);
  EXPECT_EQ(back.algorithm, "mamlcon");
  EXPECT_EQ(back.extra, c.extra);
  EXPECT_EQ(back.model.hidden, c.model.hidden);
  EXPECT_EQ(back.model.head_classes, 6u);
  ASSERT_TRUE(back.params.same_layout(c.params));
  for (const auto& name : c.params.names()) EXPECT_EQ(back.params.at(name), c.params.at(name)) << name;
}

TEST(Checkpoint, RoundTripConv) {
  const auto c = make_checkpoint(mamlcon::testing::small_conv(7), 9);
  const auto p = temp_file("conv.ckpt");
  save_checkpoint(c, p);
  const auto back = load_checkpoint(p);
  EXPECT_EQ(back.model.architecture, Architecture::Conv);
  EXPECT_EQ(back.model.input_shape, c.model.input_shape);
  EXPECT_EQ(back.model.conv_channels, c.model.conv_channels);
  for (const auto& name : c.params.names()) EXPECT_EQ(back.params.at(name), c.params.at(name)) << name;
}

TEST(Checkpoint, RejectsMismatchedParameters) {
  auto c = make_checkpoint(mamlcon::testing::small_mlp(4, 3), 1);
  c.model.head_classes = 5;
  EXPECT_THROW(save_checkpoint(c, temp_file("bad.ckpt")), ConfigError);
}

TEST(Checkpoint, RejectsFeatureArchive) {
  SyntheticSpec s;
  s.n_classes = 2;
  s.examples_per_class = 2;
  const auto p = temp_file("features.mcfa");
  write_archive(synth_generate(s), p);
  EXPECT_THROW(load_checkpoint(p), ArchiveError);
}
