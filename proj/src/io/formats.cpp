#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string_view>

#include "binary.hpp"
#include "rsyn/error.hpp"
#include "rsyn/io.hpp"

namespace rsyn {

void SyncMark::validate() const {
  if (!std::isfinite(mocap_time) || !std::isfinite(radar_time)) throw DataError("sync mark times must be finite");
}

namespace io {

namespace {

constexpr std::string_view kPairsMagic = "RSYNPAIR";
constexpr std::string_view kSpectraMagic = "RSYNSPEC";
constexpr std::uint32_t kPairsVersion = 1;
constexpr std::uint32_t kSpectraVersion = 1;

std::string where(const std::string& what, std::size_t line) { return what + ":" + std::to_string(line) + ": "; }

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double number(std::string_view field, const std::string& what, std::size_t line, const char* column) {
  field = trim(field);
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(where(what, line) + "bad number '" + std::string(field) + "' in column " + column);
  }
  return v;
}

// "#kind key=value key=value"
std::vector<std::pair<std::string, std::string>> header_fields(std::string_view line, std::string_view kind,
                                                               const std::string& what) {
  const std::string tag = "#" + std::string(kind);
  if (line.substr(0, tag.size()) != tag) {
    throw ParseError(where(what, 1) + "expected header line starting with '" + tag + "'");
  }
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(std::string(line.substr(tag.size())));
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError(where(what, 1) + "bad header field '" + tok + "'");
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::string& path, const std::string& text) { write_file(path, {text.begin(), text.end()}); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median_interval(const std::vector<double>& t) {
  std::vector<double> d(t.size() - 1);
  for (std::size_t i = 1; i < t.size(); ++i) d[i - 1] = t[i] - t[i - 1];
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

void check_rate(const std::vector<double>& t, double declared, const std::string& what) {
  if (t.size() < 2) return;
  const double measured = 1.0 / median_interval(t);
  if (std::abs(measured - declared) > 1e-3 * declared) {
    throw DataError(what + ": declared rate " + fmt(declared) + " Hz but timestamps give " + fmt(measured) + " Hz");
  }
}

}  // namespace

// ---- MoCap CSV

MoCapStream parse_mocap(const std::string& text, const std::string& what, MoCapFileInfo* info) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(where(what, 1) + "empty file");
  MoCapFileInfo meta;
  std::size_t markers = 0, dims = 3;
  bool have_rate = false, have_markers = false;
  for (const auto& [k, v] : header_fields(lines[0], "mocap", what)) {
    if (k == "rate") {
      meta.rate = number(v, what, 1, "rate");
      have_rate = true;
    } else if (k == "units") {
      meta.units = v;
    } else if (k == "markers") {
      markers = static_cast<std::size_t>(number(v, what, 1, "markers"));
      have_markers = true;
    } else if (k == "dims") {
      dims = static_cast<std::size_t>(number(v, what, 1, "dims"));
    } else {
      throw ParseError(where(what, 1) + "unknown header field '" + k + "'");
    }
  }
  if (!have_rate || !have_markers) throw ParseError(where(what, 1) + "header needs rate= and markers=");
  if (!(meta.rate > 0.0)) throw ParseError(where(what, 1) + "rate must be positive");
  if (markers == 0 || dims == 0) throw ParseError(where(what, 1) + "markers and dims must be positive");
  double scale = 1.0;
  if (meta.units == "mm") scale = 1e-3;
  else if (meta.units == "cm") scale = 1e-2;
  else if (meta.units != "m") throw ParseError(where(what, 1) + "units must be m, cm or mm");

  if (lines.size() < 2) throw ParseError(where(what, 2) + "missing column row");
  const auto cols = split(lines[1], ',');
  const std::size_t ncols = 2 + markers * dims;
  if (cols.size() != ncols) {
    throw ParseError(where(what, 2) + "header row has " + std::to_string(cols.size()) + " columns, expected " +
                     std::to_string(ncols));
  }
  if (trim(cols[0]) != "frame" || trim(cols[1]) != "time") {
    throw ParseError(where(what, 2) + "header row must start with frame,time");
  }
  static const char* kAxis[] = {"_x", "_y", "_z"};
  MoCapStream s;
  s.markers = markers;
  s.dims = dims;
  for (std::size_t m = 0; m < markers; ++m) {
    const std::string first(trim(cols[2 + m * dims]));
    std::string name = first;
    const std::string suffix = dims <= 3 ? kAxis[0] : "_0";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      name.resize(name.size() - suffix.size());
    }
    s.marker_names.push_back(name);
  }

  bool any_gap = false;
  std::vector<std::uint8_t> valid;
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const std::size_t lineno = li + 1;
    if (lines[li].empty()) throw ParseError(where(what, lineno) + "empty row");
    const auto f = split(lines[li], ',');
    if (f.size() != ncols) {
      throw ParseError(where(what, lineno) + "row has " + std::to_string(f.size()) + " fields, expected " +
                       std::to_string(ncols));
    }
    number(f[0], what, lineno, "frame");
    const double t = number(f[1], what, lineno, "time");
    if (!s.t.empty() && !(t > s.t.back())) {
      throw ParseError(where(what, lineno) + "time " + fmt(t) + " not after previous " + fmt(s.t.back()));
    }
    s.t.push_back(t);
    for (std::size_t m = 0; m < markers; ++m) {
      std::size_t empty = 0;
      for (std::size_t d = 0; d < dims; ++d) empty += trim(f[2 + m * dims + d]).empty();
      if (empty == dims) {
        valid.push_back(0);
        any_gap = true;
        for (std::size_t d = 0; d < dims; ++d) s.positions.push_back(0.0);
        continue;
      }
      if (empty != 0) {
        throw ParseError(where(what, lineno) + "marker '" + s.marker_names[m] + "' partially missing");
      }
      valid.push_back(1);
      for (std::size_t d = 0; d < dims; ++d) {
        const std::string col = s.marker_names[m] + (dims <= 3 ? kAxis[d] : "_" + std::to_string(d));
        s.positions.push_back(scale * number(f[2 + m * dims + d], what, lineno, col.c_str()));
      }
    }
  }
  if (s.t.empty()) throw ParseError(what + ": no data rows");
  if (any_gap) s.valid = std::move(valid);
  s.validate();
  check_rate(s.t, meta.rate, what);
  if (info) *info = meta;
  return s;
}

MoCapStream load_mocap(const std::string& path, MoCapFileInfo* info) {
  return parse_mocap(read_text(path), path, info);
}

std::string format_mocap(const MoCapStream& s, double rate) {
  s.validate();
  std::string out = "#mocap rate=" + fmt(rate) + " units=m markers=" + std::to_string(s.markers) +
                    " dims=" + std::to_string(s.dims) + "\nframe,time";
  for (std::size_t m = 0; m < s.markers; ++m) {
    const std::string name = s.marker_names.empty() ? "m" + std::to_string(m) : s.marker_names[m];
    for (std::size_t d = 0; d < s.dims; ++d) {
      out += "," + name + (s.dims <= 3 ? std::string("_") + "xyz"[d] : "_" + std::to_string(d));
    }
  }
  out += '\n';
  for (std::size_t n = 0; n < s.frames(); ++n) {
    out += std::to_string(n) + "," + fmt(s.t[n]);
    for (std::size_t m = 0; m < s.markers; ++m) {
      for (std::size_t d = 0; d < s.dims; ++d) {
        out += ',';
        if (s.observed(n, m)) out += fmt(s.at(n, m, d));
      }
    }
    out += '\n';
  }
  return out;
}

void save_mocap(const MoCapStream& s, double rate, const std::string& path) { write_text(path, format_mocap(s, rate)); }

// ---- radar CSV

RadarSignal parse_radar(const std::string& text, const std::string& what, RadarFileInfo* info) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(where(what, 1) + "empty file");
  RadarFileInfo meta;
  bool have_rate = false;
  for (const auto& [k, v] : header_fields(lines[0], "radar", what)) {
    if (k == "rate") {
      meta.rate = number(v, what, 1, "rate");
      have_rate = true;
    } else if (k == "carrier") {
      meta.carrier_hz = number(v, what, 1, "carrier");
    } else {
      throw ParseError(where(what, 1) + "unknown header field '" + k + "'");
    }
  }
  if (!have_rate) throw ParseError(where(what, 1) + "header needs rate=");
  if (!(meta.rate > 0.0) || !(meta.carrier_hz > 0.0)) throw ParseError(where(what, 1) + "rate and carrier must be positive");
  if (lines.size() < 2) throw ParseError(where(what, 2) + "missing column row");
  const auto cols = split(lines[1], ',');
  if (cols.size() != 3 || trim(cols[0]) != "time" || trim(cols[1]) != "i" || trim(cols[2]) != "q") {
    throw ParseError(where(what, 2) + "header row must be time,i,q");
  }
  RadarSignal r;
  r.carrier_hz = meta.carrier_hz;
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const std::size_t lineno = li + 1;
    const auto f = split(lines[li], ',');
    if (f.size() != 3) {
      throw ParseError(where(what, lineno) + "row has " + std::to_string(f.size()) + " fields, expected 3");
    }
    const double t = number(f[0], what, lineno, "time");
    if (!r.t.empty() && !(t > r.t.back())) {
      throw ParseError(where(what, lineno) + "time " + fmt(t) + " not after previous " + fmt(r.t.back()));
    }
    r.t.push_back(t);
    r.iq.emplace_back(number(f[1], what, lineno, "i"), number(f[2], what, lineno, "q"));
  }
  if (r.t.empty()) throw ParseError(what + ": no data rows");
  r.validate();
  check_rate(r.t, meta.rate, what);
  if (info) *info = meta;
  return r;
}

RadarSignal load_radar(const std::string& path, RadarFileInfo* info) {
  return parse_radar(read_text(path), path, info);
}

std::string format_radar(const RadarSignal& r, double rate) {
  r.validate();
  std::string out = "#radar rate=" + fmt(rate) + " carrier=" + fmt(r.carrier_hz) + "\ntime,i,q\n";
  for (std::size_t n = 0; n < r.size(); ++n) {
    out += fmt(r.t[n]) + "," + fmt(r.iq[n].real()) + "," + fmt(r.iq[n].imag()) + "\n";
  }
  return out;
}

void save_radar(const RadarSignal& r, double rate, const std::string& path) { write_text(path, format_radar(r, rate)); }

// ---- alignment

std::pair<MoCapStream, RadarSignal> align(const MoCapStream& mocap, const RadarSignal& radar, const SyncMark& sync) {
  sync.validate();
  mocap.validate();
  radar.validate();
  if (mocap.t.empty() || radar.t.empty()) throw DataError("align: empty stream");
  if (sync.mocap_time < mocap.t.front() || sync.mocap_time > mocap.t.back()) {
    throw DataError("align: sync time " + fmt(sync.mocap_time) + " s outside MoCap span [" + fmt(mocap.t.front()) +
                    ", " + fmt(mocap.t.back()) + "]");
  }
  if (sync.radar_time < radar.t.front() || sync.radar_time > radar.t.back()) {
    throw DataError("align: sync time " + fmt(sync.radar_time) + " s outside radar span [" + fmt(radar.t.front()) +
                    ", " + fmt(radar.t.back()) + "]");
  }
  const double lo = std::max(mocap.t.front() - sync.mocap_time, radar.t.front() - sync.radar_time);
  const double hi = std::min(mocap.t.back() - sync.mocap_time, radar.t.back() - sync.radar_time);
  if (!(hi > lo)) throw DataError("align: streams do not overlap");

  MoCapStream m;
  m.markers = mocap.markers;
  m.dims = mocap.dims;
  m.marker_names = mocap.marker_names;
  const std::size_t stride = mocap.markers * mocap.dims;
  // MoCap keeps one bracketing frame on each side so it can be interpolated
  // at every radar sample of the overlap.
  std::size_t first = 0, last = mocap.frames() - 1;
  while (first + 1 < mocap.frames() && mocap.t[first + 1] - sync.mocap_time <= lo) ++first;
  while (last > 0 && mocap.t[last - 1] - sync.mocap_time >= hi) --last;
  for (std::size_t n = first; n <= last; ++n) {
    const double t = mocap.t[n] - sync.mocap_time;
    m.t.push_back(t);
    m.positions.insert(m.positions.end(), mocap.positions.begin() + static_cast<std::ptrdiff_t>(n * stride),
                       mocap.positions.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
    if (!mocap.valid.empty()) {
      m.valid.insert(m.valid.end(), mocap.valid.begin() + static_cast<std::ptrdiff_t>(n * mocap.markers),
                     mocap.valid.begin() + static_cast<std::ptrdiff_t>((n + 1) * mocap.markers));
    }
  }
  RadarSignal r;
  r.carrier_hz = radar.carrier_hz;
  for (std::size_t n = 0; n < radar.size(); ++n) {
    const double t = radar.t[n] - sync.radar_time;
    if (t < lo || t > hi) continue;
    r.t.push_back(t);
    r.iq.push_back(radar.iq[n]);
  }
  if (m.t.empty() || r.t.empty()) throw DataError("align: streams do not overlap");
  return {std::move(m), std::move(r)};
}

// ---- binary containers

void save_pairs(const WindowedPairs& p, const std::string& path) {
  if (p.count == 0) throw DataError("save_pairs: refusing to write an empty pairs set (T = 0)");
  p.validate();
  ByteWriter out;
  out.bytes(kPairsMagic);
  out.u32(kPairsVersion);
  out.u64(p.count);
  out.u32(static_cast<std::uint32_t>(p.window));
  out.u32(static_cast<std::uint32_t>(p.markers));
  out.u32(static_cast<std::uint32_t>(p.dims));
  out.u32(static_cast<std::uint32_t>(p.bins));
  out.u32(static_cast<std::uint32_t>(p.cfg.window));
  out.u32(static_cast<std::uint32_t>(p.cfg.hop));
  out.f64(p.cfg.mocap_rate);
  out.f64(p.cfg.radar_rate);
  out.u32(p.cfg.hann ? 1 : 0);
  out.u32(p.starts.empty() ? 0 : 1);
  for (std::size_t t = 0; t < p.count && !p.starts.empty(); ++t) out.u64(p.starts[t]);
  for (double v : p.mocap) out.f32(static_cast<float>(v));
  for (double v : p.spec) out.f32(static_cast<float>(v));
  write_file(path, out.buffer());
}

WindowedPairs load_pairs(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes.data(), bytes.size(), path);
  if (in.remaining() < kPairsMagic.size() || in.bytes(kPairsMagic.size()) != kPairsMagic) {
    throw FormatError(path + ": not a pairs file");
  }
  const auto version = in.u32();
  if (version != kPairsVersion) {
    throw FormatError(path + ": pairs version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kPairsVersion) + ")");
  }
  WindowedPairs p;
  p.count = in.u64();
  p.window = in.u32();
  p.markers = in.u32();
  p.dims = in.u32();
  p.bins = in.u32();
  p.cfg.window = in.u32();
  p.cfg.hop = in.u32();
  p.cfg.mocap_rate = in.f64();
  p.cfg.radar_rate = in.f64();
  p.cfg.hann = in.u32() != 0;
  const bool has_starts = in.u32() != 0;
  if (p.count == 0 || p.window == 0 || p.markers == 0 || p.dims == 0 || p.bins != p.window ||
      p.cfg.window != p.window) {
    throw FormatError(path + ": inconsistent header (T=" + std::to_string(p.count) + ", W=" + std::to_string(p.window) +
                      ", M=" + std::to_string(p.markers) + ", D=" + std::to_string(p.dims) +
                      ", F=" + std::to_string(p.bins) + ")");
  }
  // Size check before allocating anything large.
  const unsigned long long expect =
      (has_starts ? 8ULL * p.count : 0ULL) + 4ULL * p.count * p.window * p.markers * p.dims + 4ULL * p.count * p.bins;
  if (in.remaining() != expect) {
    throw FormatError(path + ": payload is " + std::to_string(in.remaining()) + " bytes, header implies " +
                      std::to_string(expect));
  }
  if (has_starts) {
    p.starts.resize(p.count);
    for (auto& s : p.starts) s = in.u64();
  }
  p.mocap.resize(p.count * p.window * p.markers * p.dims);
  for (auto& v : p.mocap) v = in.f32();
  p.spec.resize(p.count * p.bins);
  for (auto& v : p.spec) v = in.f32();
  try {
    p.validate();
    p.cfg.validate();
  } catch (const Error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return p;
}

void save_spectra(const SpectrumSet& s, const std::string& path) {
  if (s.frames == 0 || s.bins == 0 || s.data.size() != s.frames * s.bins) {
    throw DataError("save_spectra: bad extents");
  }
  ByteWriter out;
  out.bytes(kSpectraMagic);
  out.u32(kSpectraVersion);
  out.u64(s.frames);
  out.u32(static_cast<std::uint32_t>(s.bins));
  for (double v : s.data) out.f32(static_cast<float>(v));
  write_file(path, out.buffer());
}

SpectrumSet load_spectra(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes.data(), bytes.size(), path);
  if (in.remaining() < kSpectraMagic.size() || in.bytes(kSpectraMagic.size()) != kSpectraMagic) {
    throw FormatError(path + ": not a spectra file");
  }
  const auto version = in.u32();
  if (version != kSpectraVersion) throw FormatError(path + ": spectra version " + std::to_string(version) + " unsupported");
  SpectrumSet s;
  s.frames = in.u64();
  s.bins = in.u32();
  if (s.frames == 0 || s.bins == 0) throw FormatError(path + ": empty spectra");
  if (in.remaining() != 4ULL * s.frames * s.bins) {
    throw FormatError(path + ": payload is " + std::to_string(in.remaining()) + " bytes, header implies " +
                      std::to_string(4ULL * s.frames * s.bins));
  }
  s.data.resize(s.frames * s.bins);
  for (auto& v : s.data) v = in.f32();
  return s;
}

}  // namespace io
}  // namespace rsyn
