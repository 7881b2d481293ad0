#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mamlcon/tensor.hpp"

namespace mamlcon {

/// 39-dimensional MFCC front end: 13 cepstra plus deltas and delta-deltas.
struct MfccConfig {
  double sample_rate = 16000.0;
  std::size_t window = 400;  // 25 ms
  std::size_t hop = 160;     // 10 ms
  std::size_t fft_size = 512;
  std::size_t mel_filters = 40;
  std::size_t num_ceps = 13;
  std::size_t delta_window = 2;
  std::size_t target_frames = 101;

  void validate() const;
  std::size_t feature_dim() const { return num_ceps * 3; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterEdges {
  double left_hz;
  double center_hz;
  double right_hz;
};

/// Corner frequencies of each triangular filter (HTK mel scale, 0 to Nyquist).
std::vector<MelFilterEdges> mel_filter_edges(const MfccConfig& cfg);

/// Filter weights [mel_filters, fft_size/2 + 1].
Tensor mel_filterbank(const MfccConfig& cfg);

/// Number of analysis frames for a waveform of `samples` samples.
std::size_t mfcc_frame_count(std::size_t samples, const MfccConfig& cfg);

/// Log mel filterbank energies [frames, mel_filters] (log floor 1e-10).
Tensor log_mel_energies(std::span<const double> waveform, const MfccConfig& cfg);

/// Orthonormal DCT-II of `x`, keeping the first `keep` coefficients.
std::vector<double> dct2_orthonormal(std::span<const double> x, std::size_t keep);
/// Inverse of the orthonormal DCT-II for a length-`n` signal (missing coefficients are zero).
std::vector<double> idct2_orthonormal(std::span<const double> coeffs, std::size_t n);

/// Regression deltas along time with edge replication. [frames, D] -> [frames, D].
Tensor deltas(const Tensor& features, std::size_t window);

/// [frames, 3 * num_ceps] MFCC + delta + delta-delta.
Tensor mfcc(std::span<const double> waveform, const MfccConfig& cfg);

/// Zero-pads or truncates along time to exactly `target_frames` rows.
Tensor pad_or_truncate(const Tensor& features, std::size_t target_frames);

struct Waveform {
  std::uint32_t sample_rate = 0;
  std::vector<double> samples;  // scaled to [-1, 1)
};

/// Reads a 16-bit PCM mono RIFF/WAVE file.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wav);

}  // namespace mamlcon
