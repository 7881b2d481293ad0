#include "mamlcon/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "mamlcon/errors.hpp"

namespace mamlcon {

void MfccConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  if (window == 0 || hop == 0) throw ConfigError("window and hop must be positive");
  if (window > fft_size) throw ConfigError("analysis window is longer than the FFT");
  if (mel_filters == 0 || num_ceps == 0) throw ConfigError("filter and cepstrum counts must be positive");
  if (num_ceps > mel_filters) throw ConfigError("num_ceps cannot exceed mel_filters");
  if (delta_window == 0) throw ConfigError("delta window must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<MelFilterEdges> mel_filter_edges(const MfccConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  const std::size_t points = cfg.mel_filters + 2;
  std::vector<double> hz(points);
  for (std::size_t i = 0; i < points; ++i)
    hz[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(points - 1));
  std::vector<MelFilterEdges> out(cfg.mel_filters);
  for (std::size_t m = 0; m < cfg.mel_filters; ++m) out[m] = {hz[m], hz[m + 1], hz[m + 2]};
  return out;
}

Tensor mel_filterbank(const MfccConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.fft_size / 2 + 1;
  Tensor fb({cfg.mel_filters, bins});
  const auto edges = mel_filter_edges(cfg);
  for (std::size_t m = 0; m < cfg.mel_filters; ++m) {
    const auto [lo, mid, hi] = edges[m];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      double w = 0.0;
      if (f >= lo && f <= mid)
        w = (f - lo) / (mid - lo);
      else if (f > mid && f <= hi)
        w = (hi - f) / (hi - mid);
      fb[m * bins + k] = w;
    }
  }
  return fb;
}

std::size_t mfcc_frame_count(std::size_t samples, const MfccConfig& cfg) {
  if (samples < cfg.window)
    throw std::invalid_argument("waveform of " + std::to_string(samples) + " samples is shorter than one " +
                                std::to_string(cfg.window) + "-sample window");
  return 1 + (samples - cfg.window) / cfg.hop;
}

namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("FFTW could not create a plan");
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::span<double> input() { return {in_.get(), n_}; }

  /// |X_k|^2 for k = 0..n/2.
  void power(std::span<double> out) {
    fftw_execute(plan_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = out_.get()[k][0] * out_.get()[k][0] + out_.get()[k][1] * out_.get()[k][1];
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

}  // namespace

Tensor log_mel_energies(std::span<const double> waveform, const MfccConfig& cfg) {
  cfg.validate();
  const std::size_t frames = mfcc_frame_count(waveform.size(), cfg);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const Tensor fb = mel_filterbank(cfg);

  std::vector<double> hamming(cfg.window);
  for (std::size_t n = 0; n < cfg.window; ++n)
    hamming[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                        static_cast<double>(cfg.window - 1));

  RealFft fft(cfg.fft_size);
  std::vector<double> power(bins);
  Tensor out({frames, cfg.mel_filters});
  for (std::size_t t = 0; t < frames; ++t) {
    auto buf = fft.input();
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t n = 0; n < cfg.window; ++n) buf[n] = waveform[t * cfg.hop + n] * hamming[n];
    fft.power(power);
    for (std::size_t m = 0; m < cfg.mel_filters; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb[m * bins + k] * power[k];
      out[t * cfg.mel_filters + m] = std::log(std::max(e, 1e-10));
    }
  }
  return out;
}

std::vector<double> dct2_orthonormal(std::span<const double> x, std::size_t keep) {
  const std::size_t n = x.size();
  if (keep > n) throw std::invalid_argument("cannot keep more DCT coefficients than inputs");
  std::vector<double> out(keep);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < keep; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                             (2.0 * static_cast<double>(n)));
    out[k] = (k == 0 ? s0 : sk) * acc;
  }
  return out;
}

std::vector<double> idct2_orthonormal(std::span<const double> coeffs, std::size_t n) {
  if (coeffs.size() > n) throw std::invalid_argument("more coefficients than output samples");
  std::vector<double> out(n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      acc += (k == 0 ? s0 : sk) * coeffs[k] *
             std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                      (2.0 * static_cast<double>(n)));
    out[i] = acc;
  }
  return out;
}

Tensor deltas(const Tensor& features, std::size_t window) {
  if (features.rank() != 2) throw ShapeError("deltas expects [frames, D]");
  if (window == 0) throw std::invalid_argument("delta window must be positive");
  const std::size_t frames = features.dim(0), dim = features.dim(1);
  double denom = 0.0;
  for (std::size_t n = 1; n <= window; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  Tensor out(features.shape());
  const auto last = static_cast<std::ptrdiff_t>(frames) - 1;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= window; ++n) {
        const auto ahead = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t + n), last));
        const auto behind =
            static_cast<std::size_t>(std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(n), 0));
        acc += static_cast<double>(n) * (features[ahead * dim + d] - features[behind * dim + d]);
      }
      out[t * dim + d] = acc / denom;
    }
  }
  return out;
}

Tensor mfcc(std::span<const double> waveform, const MfccConfig& cfg) {
  const Tensor logmel = log_mel_energies(waveform, cfg);
  const std::size_t frames = logmel.dim(0);
  Tensor ceps({frames, cfg.num_ceps});
  for (std::size_t t = 0; t < frames; ++t) {
    const auto row = logmel.data().subspan(t * cfg.mel_filters, cfg.mel_filters);
    const auto c = dct2_orthonormal(row, cfg.num_ceps);
    std::copy(c.begin(), c.end(), ceps.data().begin() + static_cast<std::ptrdiff_t>(t * cfg.num_ceps));
  }
  const Tensor d1 = deltas(ceps, cfg.delta_window);
  const Tensor d2 = deltas(d1, cfg.delta_window);

  const std::size_t dim = cfg.feature_dim();
  Tensor out({frames, dim});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < cfg.num_ceps; ++j) {
      out[t * dim + j] = ceps[t * cfg.num_ceps + j];
      out[t * dim + cfg.num_ceps + j] = d1[t * cfg.num_ceps + j];
      out[t * dim + 2 * cfg.num_ceps + j] = d2[t * cfg.num_ceps + j];
    }
  }
  return out;
}

Tensor pad_or_truncate(const Tensor& features, std::size_t target_frames) {
  if (features.rank() != 2) throw ShapeError("pad_or_truncate expects [frames, D]");
  if (target_frames == 0) throw std::invalid_argument("target frame count must be positive");
  const std::size_t dim = features.dim(1);
  Tensor out({target_frames, dim});
  const std::size_t keep = std::min(target_frames, features.dim(0)) * dim;
  std::copy_n(features.data().begin(), keep, out.data().begin());
  return out;
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  Waveform wav;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      const std::uint16_t format = le16(chunk + 8);
      const std::uint16_t channels = le16(chunk + 10);
      wav.sample_rate = le32(chunk + 12);
      const std::uint16_t bits = le16(chunk + 22);
      if (format != 1) throw fail("compressed WAV data is not supported");
      if (channels != 1) throw fail("expected mono audio, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw fail("expected 16-bit samples, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      const std::size_t count = size / 2;
      wav.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        wav.samples[i] = static_cast<double>(static_cast<std::int16_t>(le16(chunk + 8 + 2 * i))) / 32768.0;
      return wav;
    }
    pos += 8 + size + (size & 1u);
  }
  throw fail("no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write WAV file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, 1);
  put16(os, 1);
  put32(os, wav.sample_rate);
  put32(os, wav.sample_rate * 2);
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_bytes);
  for (double s : wav.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
}

}  // namespace mamlcon
