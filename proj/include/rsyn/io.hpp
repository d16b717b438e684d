#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rsyn/dsp.hpp"

namespace rsyn {

// Clock offsets recorded by the sync pulse: the same instant on each device.
struct SyncMark {
  double mocap_time = 0.0;  // s, MoCap clock
  double radar_time = 0.0;  // s, radar clock

  void validate() const;  // both finite; throws DataError
};

struct MoCapFileInfo {
  double rate = 250.0;
  std::string units = "m";
};

struct RadarFileInfo {
  double rate = 256.0;
  double carrier_hz = 5.8e9;
};

namespace io {

// MoCap CSV. Positions are returned in meters whatever the declared units.
// Throws ParseError (with line number) on malformed text and DataError when the
// declared rate disagrees with the median frame interval by more than 0.1%.
MoCapStream load_mocap(const std::string& path, MoCapFileInfo* info = nullptr);
MoCapStream parse_mocap(const std::string& text, const std::string& what, MoCapFileInfo* info = nullptr);
// Writes meters with round-trip precision; gaps become empty fields.
void save_mocap(const MoCapStream& stream, double rate, const std::string& path);
std::string format_mocap(const MoCapStream& stream, double rate);

// Radar CSV (time, I, Q).
RadarSignal load_radar(const std::string& path, RadarFileInfo* info = nullptr);
RadarSignal parse_radar(const std::string& text, const std::string& what, RadarFileInfo* info = nullptr);
void save_radar(const RadarSignal& signal, double rate, const std::string& path);
std::string format_radar(const RadarSignal& signal, double rate);

// Shifts both clocks so the sync instant is t = 0, then crops both streams to
// samples inside the common span. Throws DataError when a sync time lies
// outside its stream or the spans do not overlap.
std::pair<MoCapStream, RadarSignal> align(const MoCapStream& mocap, const RadarSignal& radar, const SyncMark& sync);

// Binary pairs container (see docs/formats). Throws FormatError.
void save_pairs(const WindowedPairs& pairs, const std::string& path);
WindowedPairs load_pairs(const std::string& path);

// Binary T x F real spectrogram container (predictions). Throws FormatError.
struct SpectrumSet {
  std::size_t frames = 0;  // T
  std::size_t bins = 0;    // F
  std::vector<double> data;
};
void save_spectra(const SpectrumSet& s, const std::string& path);
SpectrumSet load_spectra(const std::string& path);

}  // namespace io
}  // namespace rsyn
