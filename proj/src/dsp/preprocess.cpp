#include <algorithm>
#include <cmath>
#include <numbers>

#include "rsyn/dsp.hpp"
#include "rsyn/error.hpp"
#include "rsyn/log.hpp"

namespace rsyn {

void PreprocessConfig::validate() const {
  if (window < 1) throw ConfigError("window W must be >= 1");
  if (hop < 1 || hop > window) {
    throw ConfigError("hop H must satisfy 1 <= H <= W (H=" + std::to_string(hop) + ", W=" + std::to_string(window) + ")");
  }
  if (!(mocap_rate > 0.0) || !std::isfinite(mocap_rate)) throw ConfigError("MoCap rate must be > 0");
  if (!(radar_rate > 0.0) || !std::isfinite(radar_rate)) throw ConfigError("radar rate must be > 0");
}

bool MoCapStream::has_gaps() const {
  return std::any_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v == 0; });
}

void MoCapStream::validate() const {
  if (markers == 0 || dims == 0) throw DataError("MoCap stream has no markers or zero feature width");
  if (positions.size() != t.size() * markers * dims) {
    throw DataError("MoCap positions hold " + std::to_string(positions.size()) + " values, expected " +
                    std::to_string(t.size() * markers * dims));
  }
  if (!valid.empty() && valid.size() != t.size() * markers) throw DataError("MoCap gap mask has wrong size");
  if (!marker_names.empty() && marker_names.size() != markers) throw DataError("marker name count != marker count");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw DataError("MoCap timestamps not strictly increasing at frame " + std::to_string(i));
  }
}

void RadarSignal::validate() const {
  if (t.size() != iq.size()) throw DataError("radar timestamps and samples differ in length");
  if (t.size() < 2) return;
  const double period = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(period > 0.0)) throw DataError("radar timestamps not strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double dt = t[i] - t[i - 1];
    if (!(dt > 0.0)) throw DataError("radar timestamps not strictly increasing at sample " + std::to_string(i));
    if (std::abs(dt - period) > 1e-6 * period) {
      throw DataError("radar sample rate not uniform within 1 ppm at sample " + std::to_string(i));
    }
  }
}

void WindowedPairs::validate() const {
  if (bins != window) throw DataError("spectrum width F must equal window W");
  if (mocap.size() != count * window * markers * dims) throw DataError("pairs: mocap array size mismatch");
  if (spec.size() != count * bins) throw DataError("pairs: spectrum array size mismatch");
  if (!starts.empty() && starts.size() != count) throw DataError("pairs: start index count mismatch");
  for (double v : spec) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("pairs: spectrum must be nonnegative and finite");
  }
}

namespace dsp {

std::size_t segment_count(std::size_t n, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw ConfigError("window and hop must be positive");
  if (n < window) {
    throw DataError("stream of " + std::to_string(n) + " samples is shorter than window W=" + std::to_string(window));
  }
  return (n - window) / hop + 1;
}

std::vector<std::size_t> segment_windows(std::size_t n, std::size_t window, std::size_t hop) {
  const std::size_t count = segment_count(n, window, hop);
  std::vector<std::size_t> starts(count);
  for (std::size_t i = 0; i < count; ++i) starts[i] = i * hop;
  return starts;
}

MoCapStream fill_gaps(const MoCapStream& stream, std::size_t* repaired) {
  stream.validate();
  MoCapStream out = stream;
  out.valid.clear();
  std::size_t fixed = 0;
  if (!stream.has_gaps()) {
    if (repaired) *repaired = 0;
    return out;
  }
  const std::size_t n = stream.frames(), D = stream.dims;
  for (std::size_t m = 0; m < stream.markers; ++m) {
    std::vector<std::size_t> seen;
    for (std::size_t i = 0; i < n; ++i) {
      if (stream.observed(i, m)) seen.push_back(i);
    }
    if (seen.empty()) {
      const std::string name = m < stream.marker_names.size() ? stream.marker_names[m] : std::to_string(m);
      throw DataError("marker " + name + " is never observed; cannot fill gaps");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (stream.observed(i, m)) continue;
      ++fixed;
      auto next = std::lower_bound(seen.begin(), seen.end(), i);
      if (next == seen.begin() || next == seen.end()) {
        const std::size_t src = next == seen.end() ? seen.back() : *next;
        for (std::size_t d = 0; d < D; ++d) out.at(i, m, d) = stream.at(src, m, d);
        continue;
      }
      const std::size_t hi = *next, lo = *(next - 1);
      const double a = (stream.t[i] - stream.t[lo]) / (stream.t[hi] - stream.t[lo]);
      for (std::size_t d = 0; d < D; ++d) {
        const double x0 = stream.at(lo, m, d), x1 = stream.at(hi, m, d);
        out.at(i, m, d) = x0 + a * (x1 - x0);
      }
    }
  }
  if (fixed) log::info("gap-fill repaired ", fixed, " occluded marker samples");
  if (repaired) *repaired = fixed;
  return out;
}

MoCapStream resample_at(const MoCapStream& stream, std::span<const double> times) {
  stream.validate();
  if (stream.frames() < 2) throw DataError("resampling needs at least 2 MoCap frames");
  if (stream.has_gaps()) throw DataError("resampling requires a gap-filled stream");
  const auto& t = stream.t;
  const std::size_t width = stream.markers * stream.dims;
  MoCapStream out;
  out.markers = stream.markers;
  out.dims = stream.dims;
  out.marker_names = stream.marker_names;
  out.t.assign(times.begin(), times.end());
  out.positions.resize(times.size() * width);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double tau = times[k];
    if (tau < t.front() || tau > t.back()) {
      throw DataError("resample time " + std::to_string(tau) + " outside MoCap span");
    }
    if (k && tau < times[k - 1]) seg = 0;
    while (seg + 2 < t.size() && t[seg + 1] <= tau) ++seg;
    const double a = (tau - t[seg]) / (t[seg + 1] - t[seg]);
    const double* x0 = stream.positions.data() + seg * width;
    const double* x1 = x0 + width;
    double* y = out.positions.data() + k * width;
    if (a == 0.0) {
      std::copy_n(x0, width, y);
    } else if (a == 1.0) {
      std::copy_n(x1, width, y);
    } else {
      for (std::size_t j = 0; j < width; ++j) y[j] = x0[j] + a * (x1[j] - x0[j]);
    }
  }
  return out;
}

MoCapStream resample_linear(const MoCapStream& stream, double target_rate) {
  if (!(target_rate > 0.0)) throw ConfigError("target rate must be > 0");
  if (stream.frames() < 2) throw DataError("resampling needs at least 2 MoCap frames");
  const double t0 = stream.t.front(), span = stream.t.back() - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * target_rate + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t n = 0; n < count; ++n) grid[n] = std::min(t0 + static_cast<double>(n) / target_rate, stream.t.back());
  return resample_at(stream, grid);
}

Spectrogram stft_density(std::span<const cdouble> iq, const PreprocessConfig& cfg) {
  cfg.validate();
  const std::size_t W = cfg.window;
  const auto starts = segment_windows(iq.size(), W, cfg.hop);
  std::vector<double> w(W, 1.0);
  if (cfg.hann) {
    for (std::size_t n = 0; n < W; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(W));
    }
  }
  double energy = 0.0;
  for (double v : w) energy += v * v;
  const double scale = 1.0 / std::sqrt(cfg.radar_rate * energy);

  Spectrogram out;
  out.bins = W;
  out.frames = starts.size();
  out.data.resize(W * starts.size());
  std::vector<cdouble> buf(W);
  for (std::size_t t = 0; t < starts.size(); ++t) {
    for (std::size_t n = 0; n < W; ++n) buf[n] = iq[starts[t] + n] * w[n];
    const auto X = dft(buf);
    for (std::size_t k = 0; k < W; ++k) out.at(k, t) = X[k] * scale;
  }
  return out;
}

Spectrogram center_shift(const Spectrogram& spec) {
  Spectrogram out = spec;
  const std::size_t F = spec.bins, shift = F / 2;
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t dst = (f + shift) % F;
    std::copy_n(spec.data.begin() + static_cast<long>(f * spec.frames), spec.frames,
                out.data.begin() + static_cast<long>(dst * spec.frames));
  }
  return out;
}

RealSpectrogram compress_sqrt(const Spectrogram& spec) {
  RealSpectrogram out{spec.bins, spec.frames, std::vector<double>(spec.data.size())};
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data[i] = std::sqrt(std::abs(spec.data[i]));
  return out;
}

namespace {

// Indices of radar samples inside the MoCap span.
std::pair<std::size_t, std::size_t> overlap_range(const MoCapStream& mocap, const RadarSignal& radar) {
  const double lo = mocap.t.front(), hi = mocap.t.back();
  auto first = std::lower_bound(radar.t.begin(), radar.t.end(), lo);
  auto last = std::upper_bound(radar.t.begin(), radar.t.end(), hi);
  return {static_cast<std::size_t>(first - radar.t.begin()), static_cast<std::size_t>(last - radar.t.begin())};
}

void check_radar_rate(const RadarSignal& radar, const PreprocessConfig& cfg) {
  if (radar.size() < 2) return;
  const double measured = static_cast<double>(radar.size() - 1) / (radar.t.back() - radar.t.front());
  if (std::abs(measured - cfg.radar_rate) > 1e-3 * cfg.radar_rate) {
    throw ConfigError("radar stream runs at " + std::to_string(measured) + " Hz but F_r is configured as " +
                      std::to_string(cfg.radar_rate) + " Hz");
  }
}

}  // namespace

WindowedPairs build_pairs(const MoCapStream& mocap, const RadarSignal& radar, const PreprocessConfig& cfg) {
  cfg.validate();
  radar.validate();
  check_radar_rate(radar, cfg);
  MoCapStream filled = fill_gaps(mocap);
  if (filled.frames() < 2) throw DataError("MoCap stream needs at least 2 frames");

  const auto [first, last] = overlap_range(filled, radar);
  const std::size_t n = last > first ? last - first : 0;
  if (n < cfg.window) {
    throw DataError("insufficient overlap: " + std::to_string(n) + " radar samples inside the MoCap span, need W=" +
                    std::to_string(cfg.window));
  }
  std::span<const double> times(radar.t.data() + first, n);
  MoCapStream grid = resample_at(filled, times);
  std::span<const cdouble> iq(radar.iq.data() + first, n);
  RealSpectrogram s = compress_sqrt(center_shift(stft_density(iq, cfg)));

  const std::size_t W = cfg.window, M = grid.markers, D = grid.dims;
  const auto starts = segment_windows(n, W, cfg.hop);
  WindowedPairs out;
  out.count = starts.size();
  out.window = W;
  out.markers = M;
  out.dims = D;
  out.bins = W;
  out.cfg = cfg;
  out.mocap.resize(out.count * W * M * D);
  out.spec.resize(out.count * W);
  for (std::size_t t = 0; t < starts.size(); ++t) {
    out.starts.push_back(starts[t]);
    std::copy_n(grid.positions.begin() + static_cast<long>(starts[t] * M * D), W * M * D,
                out.mocap.begin() + static_cast<long>(t * W * M * D));
    for (std::size_t f = 0; f < W; ++f) out.spec[t * W + f] = s.at(f, t);
  }
  log::info("built ", out.count, " pairs (W=", W, ", H=", cfg.hop, ", M=", M, ", D=", D, ")");
  return out;
}

std::vector<double> mocap_windows(const MoCapStream& mocap, const PreprocessConfig& cfg, std::size_t* count) {
  cfg.validate();
  MoCapStream grid = resample_linear(fill_gaps(mocap), cfg.radar_rate);
  const std::size_t W = cfg.window, width = grid.markers * grid.dims;
  const auto starts = segment_windows(grid.frames(), W, cfg.hop);
  std::vector<double> out(starts.size() * W * width);
  for (std::size_t t = 0; t < starts.size(); ++t) {
    std::copy_n(grid.positions.begin() + static_cast<long>(starts[t] * width), W * width,
                out.begin() + static_cast<long>(t * W * width));
  }
  if (count) *count = starts.size();
  return out;
}

}  // namespace dsp
}  // namespace rsyn
