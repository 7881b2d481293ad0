#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "mamlcon/features.hpp"
#include "test_util.hpp"

using namespace mamlcon;

namespace {

std::vector<double> tone(double hz, std::size_t n, double rate = 16000.0, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.1);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST(Mfcc, OneSecondGives98By39) {
  const MfccConfig cfg;
  EXPECT_EQ(mfcc_frame_count(16000, cfg), 98u);
  const Tensor f = mfcc(noise(16000, 1), cfg);
  EXPECT_EQ(f.shape(), (Shape{98, 39}));
  for (double v : f.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Mfcc, FrameCountFormula) {
  const MfccConfig cfg;
  for (std::size_t n : {400u, 401u, 559u, 560u, 8000u, 16000u, 16159u, 16160u})
    EXPECT_EQ(mfcc_frame_count(n, cfg), 1 + (n - 400) / 160) << n;
  EXPECT_THROW(mfcc(std::vector<double>(399), cfg), std::invalid_argument);
  EXPECT_THROW(mfcc_frame_count(10, cfg), std::invalid_argument);
}

TEST(Mfcc, Deterministic) {
  const auto x = noise(5000, 2);
  EXPECT_EQ(mfcc(x, MfccConfig{}), mfcc(x, MfccConfig{}));
}

TEST(Mfcc, StationarySignalHasZeroDeltas) {
  // Digital silence hits the log floor in every band: the cepstra are constant in time.
  const Tensor f = mfcc(std::vector<double>(4000, 0.0), MfccConfig{});
  for (std::size_t t = 0; t < f.dim(0); ++t)
    for (std::size_t j = 13; j < 39; ++j) EXPECT_EQ(f[t * 39 + j], 0.0);
}

TEST(Deltas, ConstantSequenceGivesZeros) {
  Tensor c({20, 13});
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t j = 0; j < 13; ++j) c[t * 13 + j] = 0.7 * static_cast<double>(j) - 2.0;
  const Tensor d = deltas(c, 2);
  const Tensor dd = deltas(d, 2);
  for (double v : d.values()) EXPECT_EQ(v, 0.0);
  for (double v : dd.values()) EXPECT_EQ(v, 0.0);
}

TEST(Deltas, LinearRampInteriorSlope) {
  Tensor c({10, 1});
  for (std::size_t t = 0; t < 10; ++t) c[t] = 3.0 * static_cast<double>(t);
  const Tensor d = deltas(c, 2);
  for (std::size_t t = 2; t < 8; ++t) EXPECT_NEAR(d[t], 3.0, 1e-12);
  EXPECT_LT(d[0], 3.0);  // edge replication flattens the ends
}

TEST(MelScale, HtkFormula) {
  EXPECT_NEAR(hz_to_mel(1000.0), 2595.0 * std::log10(1.0 + 1000.0 / 700.0), 1e-12);
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 0.1);
  for (double hz : {0.0, 123.0, 4000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
}

TEST(MelScale, FilterEdgesSpanZeroToNyquist) {
  const MfccConfig cfg;
  const auto e = mel_filter_edges(cfg);
  ASSERT_EQ(e.size(), 40u);
  EXPECT_NEAR(e.front().left_hz, 0.0, 1e-9);
  EXPECT_NEAR(e.back().right_hz, 8000.0, 1e-6);
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    EXPECT_LT(e[i].left_hz, e[i].center_hz);
    EXPECT_LT(e[i].center_hz, e[i].right_hz);
    EXPECT_NEAR(e[i].center_hz, e[i + 1].left_hz, 1e-9);
  }
  const Tensor fb = mel_filterbank(cfg);
  EXPECT_EQ(fb.shape(), (Shape{40, 257}));
  for (std::size_t m = 0; m < 40; ++m) {
    double s = 0;
    for (std::size_t k = 0; k < 257; ++k) {
      EXPECT_GE(fb[m * 257 + k], 0.0);
      s += fb[m * 257 + k];
    }
    EXPECT_GT(s, 0.0) << "filter " << m;
  }
}

TEST(MelScale, OneKilohertzToneLandsInItsFilter) {
  const MfccConfig cfg;
  const auto edges = mel_filter_edges(cfg);
  const Tensor e = log_mel_energies(tone(1000.0, 16000), cfg);
  for (std::size_t t = 0; t < e.dim(0); ++t) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < 40; ++m)
      if (e[t * 40 + m] > e[t * 40 + best]) best = m;
    EXPECT_LT(edges[best].left_hz, 1000.0) << "frame " << t;
    EXPECT_GT(edges[best].right_hz, 1000.0) << "frame " << t;
  }
}

TEST(Dct, OrthonormalRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(40);
    for (auto& v : x) v = u(rng);
    const auto c = dct2_orthonormal(x, 40);
    const auto back = idct2_orthonormal(c, 40);
    double ex = 0, ec = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      EXPECT_NEAR(back[i], x[i], 1e-10);
      ex += x[i] * x[i];
      ec += c[i] * c[i];
    }
    EXPECT_NEAR(ex, ec, 1e-9 * ex);
  }
}

TEST(Dct, ConstantInputHasOnlyDcTerm) {
  const std::vector<double> x(16, 2.0);
  const auto c = dct2_orthonormal(x, 13);
  ASSERT_EQ(c.size(), 13u);
  EXPECT_NEAR(c[0], 2.0 * 4.0, 1e-12);
  for (std::size_t i = 1; i < 13; ++i) EXPECT_NEAR(c[i], 0.0, 1e-12);
  EXPECT_THROW(dct2_orthonormal(x, 17), std::invalid_argument);
}

TEST(PadOrTruncate, Examples) {
  std::mt19937_64 rng(4);
  const Tensor f98 = mamlcon::testing::random_tensor({98, 39}, rng);
  const Tensor p = pad_or_truncate(f98, 101);
  ASSERT_EQ(p.shape(), (Shape{101, 39}));
  for (std::size_t i = 0; i < 98 * 39; ++i) EXPECT_EQ(p[i], f98[i]);
  for (std::size_t i = 98 * 39; i < 101 * 39; ++i) EXPECT_EQ(p[i], 0.0);

  const Tensor f150 = mamlcon::testing::random_tensor({150, 39}, rng);
  const Tensor t = pad_or_truncate(f150, 101);
  for (std::size_t i = 0; i < 101 * 39; ++i) EXPECT_EQ(t[i], f150[i]);

  const Tensor f101 = mamlcon::testing::random_tensor({101, 39}, rng);
  EXPECT_EQ(pad_or_truncate(f101, 101), f101);
}

TEST(MfccConfigTest, Validation) {
  MfccConfig c;
  c.window = 600;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MfccConfig{};
  c.num_ceps = 41;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(MfccConfig{}.feature_dim(), 39u);
}

TEST(Wav, RoundTripWithin16BitQuantization) {
  const auto dir = std::filesystem::temp_directory_path() / "mamlcon_wav_test";
  std::filesystem::create_directories(dir);
  Waveform w;
  w.sample_rate = 16000;
  w.samples = tone(440.0, 1000);
  write_wav(dir / "a.wav", w);
  const Waveform r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 16000u);
  ASSERT_EQ(r.samples.size(), 1000u);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32768.0);
  {
    std::ofstream bad(dir / "bad.wav", std::ios::binary);
    bad << "not a wave file at all";
  }
  EXPECT_THROW(read_wav(dir / "bad.wav"), DataError);
  std::filesystem::remove_all(dir);
}
