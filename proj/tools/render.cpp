#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "rsyn/error.hpp"

namespace rsyn::cli {

namespace {

constexpr std::size_t kChartWidth = 480;
constexpr std::size_t kChartHeight = 240;
constexpr std::size_t kMargin = 12;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

void plot(Image& img, long r, long c, double v) {
  if (r < 0 || c < 0 || r >= static_cast<long>(img.height) || c >= static_cast<long>(img.width)) return;
  img.pixels[static_cast<std::size_t>(r) * img.width + static_cast<std::size_t>(c)] = v;
}

void line(Image& img, long r0, long c0, long r1, long c1, double v) {
  const long dc = std::abs(c1 - c0), sc = c0 < c1 ? 1 : -1;
  const long dr = -std::abs(r1 - r0), sr = r0 < r1 ? 1 : -1;
  long err = dc + dr;
  for (;;) {
    plot(img, r0, c0, v);
    if (r0 == r1 && c0 == c1) break;
    const long e2 = 2 * err;
    if (e2 >= dr) { err += dr; c0 += sc; }
    if (e2 <= dc) { err += dc; r0 += sr; }
  }
}

}  // namespace

io::SpectrumSet spectra_of(const WindowedPairs& pairs) {
  io::SpectrumSet s;
  s.frames = pairs.count;
  s.bins = pairs.bins;
  s.data = pairs.spec;
  return s;
}

Rendering render_spectra(const std::vector<io::SpectrumSet>& panels) {
  if (panels.empty()) throw DataError("render: no spectrogram given");
  const std::size_t T = panels.front().frames, F = panels.front().bins;
  if (T == 0 || F == 0) throw DataError("render: empty spectrogram");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& p : panels) {
    if (p.frames != T || p.bins != F) {
      throw DataError("render: panel extents differ (" + std::to_string(p.frames) + " x " + std::to_string(p.bins) +
                      " vs " + std::to_string(T) + " x " + std::to_string(F) + ")");
    }
    if (p.data.size() != T * F) throw DataError("render: spectrogram data size does not match its extents");
    for (double v : p.data) {
      if (!std::isfinite(v)) throw DataError("render: non-finite spectrogram value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Rendering r;
  r.image.width = T;
  r.image.height = F * panels.size();
  r.image.pixels.resize(r.image.width * r.image.height);
  const double span = hi - lo;
  for (std::size_t k = 0; k < panels.size(); ++k) {
    for (std::size_t row = 0; row < F; ++row) {
      const std::size_t f = F - 1 - row;
      for (std::size_t t = 0; t < T; ++t) {
        const double v = panels[k].data[t * F + f];
        r.image.pixels[(k * F + row) * T + t] = span > 0.0 ? (v - lo) / span : 0.5;
      }
    }
  }
  for (std::size_t row = 0; row < r.image.height; ++row) {
    for (std::size_t t = 0; t < T; ++t) {
      if (t) r.csv += ',';
      r.csv += fmt(r.image.at(row, t));
    }
    r.csv += '\n';
  }
  return r;
}

Rendering render_runlogs(const std::vector<RunLog>& logs) {
  if (logs.empty()) throw DataError("render: run log holds no runs");
  std::vector<std::string> kinds;
  std::map<std::string, std::vector<const RunLog*>> by_kind;
  for (const auto& log : logs) {
    if (log.epochs.empty()) throw DataError("render: run '" + log.kind + "' has no epochs");
    if (!by_kind.count(log.kind)) kinds.push_back(log.kind);
    by_kind[log.kind].push_back(&log);
  }
  std::size_t epochs = SIZE_MAX;
  for (const auto& log : logs) epochs = std::min(epochs, log.epochs.size());

  std::vector<std::vector<double>> curves;
  for (const auto& kind : kinds) {
    std::vector<double> curve(epochs);
    for (std::size_t e = 0; e < epochs; ++e) {
      std::vector<double> at;
      for (const RunLog* log : by_kind[kind]) at.push_back(log->epochs[e].train_mse);
      curve[e] = median(at);
    }
    curves.push_back(std::move(curve));
  }

  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : curves) {
    for (double v : c) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DataError("render: train MSE must be positive and finite");
      lo = std::min(lo, std::log10(v));
      hi = std::max(hi, std::log10(v));
    }
  }

  Rendering r;
  r.image.width = kChartWidth;
  r.image.height = kChartHeight;
  r.image.pixels.assign(kChartWidth * kChartHeight, 1.0);
  const long left = kMargin, right = kChartWidth - 1 - kMargin;
  const long top = kMargin, bottom = kChartHeight - 1 - kMargin;
  line(r.image, top, left, bottom, left, 0.0);
  line(r.image, bottom, left, bottom, right, 0.0);
  auto col_of = [&](std::size_t e) {
    if (epochs == 1) return (left + right) / 2;
    return left + static_cast<long>(std::lround(static_cast<double>(e) * (right - left) / (epochs - 1)));
  };
  auto row_of = [&](double v) {
    if (hi == lo) return (top + bottom) / 2;
    return bottom - static_cast<long>(std::lround((std::log10(v) - lo) / (hi - lo) * (bottom - top)));
  };
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const double shade = 0.6 * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(curves.size(), 2) - 1);
    for (std::size_t e = 0; e < epochs; ++e) {
      const long c = col_of(e), rr = row_of(curves[k][e]);
      if (e == 0) plot(r.image, rr, c, shade);
      else line(r.image, row_of(curves[k][e - 1]), col_of(e - 1), rr, c, shade);
    }
  }

  r.csv = "epoch";
  for (const auto& kind : kinds) r.csv += "," + kind;
  r.csv += '\n';
  for (std::size_t e = 0; e < epochs; ++e) {
    r.csv += std::to_string(e + 1);
    for (const auto& c : curves) r.csv += "," + fmt(c[e]);
    r.csv += '\n';
  }
  return r;
}

std::string encode_pgm(const Image& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

void write_rendering(const Rendering& r, const std::string& prefix) {
  write_file(prefix + ".pgm", encode_pgm(r.image));
  write_file(prefix + ".csv", r.csv);
}

}  // namespace rsyn::cli
