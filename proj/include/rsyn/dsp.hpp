#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rsyn {

using cdouble = std::complex<double>;

struct PreprocessConfig {
  std::size_t window = 256;  // W, also the number of frequency bins F
  std::size_t hop = 64;      // H
  double mocap_rate = 250.0;  // F_m, Hz
  double radar_rate = 256.0;  // F_r, Hz
  bool hann = false;          // rectangular analysis window unless set

  // Throws ConfigError.
  void validate() const;
};

// Marker trajectories: frames x markers x dims, row-major.
struct MoCapStream {
  std::vector<double> t;  // seconds, strictly increasing
  std::size_t markers = 0;
  std::size_t dims = 3;
  std::vector<double> positions;
  // frames x markers; 1 = observed. Empty means every sample is observed.
  std::vector<std::uint8_t> valid;
  std::vector<std::string> marker_names;

  std::size_t frames() const { return t.size(); }
  double& at(std::size_t n, std::size_t m, std::size_t d) { return positions[(n * markers + m) * dims + d]; }
  double at(std::size_t n, std::size_t m, std::size_t d) const {
    return positions[(n * markers + m) * dims + d];
  }
  bool observed(std::size_t n, std::size_t m) const { return valid.empty() || valid[n * markers + m] != 0; }
  bool has_gaps() const;

  // Structural checks (sizes, monotone time). Throws DataError.
  void validate() const;
};

struct RadarSignal {
  std::vector<double> t;
  std::vector<cdouble> iq;
  double carrier_hz = 5.8e9;

  std::size_t size() const { return iq.size(); }
  // Sizes agree, time strictly increasing and uniform within 1 ppm. Throws DataError.
  void validate() const;
};

// F x T complex matrix, row = frequency bin, column = STFT frame.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<cdouble> data;

  cdouble& at(std::size_t f, std::size_t t) { return data[f * frames + t]; }
  cdouble at(std::size_t f, std::size_t t) const { return data[f * frames + t]; }
};

// F x T real matrix.
struct RealSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  double at(std::size_t f, std::size_t t) const { return data[f * frames + t]; }
};

// Supervised pairs: mocap T x W x M x D, spec T x F (F == W).
struct WindowedPairs {
  std::size_t count = 0;  // T
  std::size_t window = 0;
  std::size_t markers = 0;
  std::size_t dims = 0;
  std::size_t bins = 0;
  std::vector<double> mocap;
  std::vector<double> spec;
  std::vector<std::uint64_t> starts;
  PreprocessConfig cfg;

  std::size_t window_stride() const { return window * markers * dims; }
  std::span<const double> mocap_window(std::size_t t) const {
    return {mocap.data() + t * window_stride(), window_stride()};
  }
  std::span<const double> spectrum(std::size_t t) const { return {spec.data() + t * bins, bins}; }

  // Shape and nonnegativity invariants. Throws DataError.
  void validate() const;
};

namespace dsp {

// T = floor((N - W) / H) + 1. Throws DataError when N < W.
std::size_t segment_count(std::size_t n, std::size_t window, std::size_t hop);
// Start sample of each segment: t * H.
std::vector<std::size_t> segment_windows(std::size_t n, std::size_t window, std::size_t hop);

// Fills occluded samples: interior gaps linearly in time, leading and trailing
// gaps held at the nearest observed value. Returns the number of repaired
// (frame, marker) samples through `repaired` when given.
MoCapStream fill_gaps(const MoCapStream& stream, std::size_t* repaired = nullptr);

// Linear interpolation at arbitrary times inside [t.front(), t.back()].
MoCapStream resample_at(const MoCapStream& stream, std::span<const double> times);
// Uniform grid t0 + n / rate covering [t0, t_last].
MoCapStream resample_linear(const MoCapStream& stream, double target_rate);

bool is_power_of_two(std::size_t n);
// In-place forward DFT (e^{-j2pi kn/N}), radix-2; n must be a power of two.
void fft_radix2(std::span<cdouble> x);
// Forward DFT of any length: radix-2 when possible, direct summation otherwise.
std::vector<cdouble> dft(std::span<const cdouble> x);

// Two-sided STFT scaled to spectral density: |S|^2 = |X|^2 / (F_r * sum w^2).
Spectrogram stft_density(std::span<const cdouble> iq, const PreprocessConfig& cfg);
// fftshift along frequency: zero-frequency moves to row floor(F/2).
Spectrogram center_shift(const Spectrogram& spec);
// sqrt(|S|) elementwise.
RealSpectrogram compress_sqrt(const Spectrogram& spec);

// Full pipeline for one recording on a common clock.
WindowedPairs build_pairs(const MoCapStream& mocap, const RadarSignal& radar, const PreprocessConfig& cfg);

// MoCap-only windows for inference: gap-fill, resample to F_r, segment.
// Returns T x W x M x D values.
std::vector<double> mocap_windows(const MoCapStream& mocap, const PreprocessConfig& cfg, std::size_t* count);

}  // namespace dsp
}  // namespace rsyn
