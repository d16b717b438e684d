#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rsyn/io.hpp"
#include "rsyn/train.hpp"

namespace rsyn::cli {

// Grayscale raster, row-major, intensities in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct Rendering {
  Image image;
  std::string csv;
};

// Spectrogram panels stacked top to bottom, each F rows by T columns. Row 0 of a
// panel is the highest positive Doppler bin, row F/2 from its bottom is zero.
// All panels share one min-max normalization; a constant input maps to 0.5.
// CSV: one line per image row, comma-separated normalized intensities.
Rendering render_spectra(const std::vector<io::SpectrumSet>& panels);

// Train MSE against epoch on a log10 axis, one curve per kind (median over the
// runs of that kind). CSV: header "epoch,<kind>,..." then one line per epoch.
Rendering render_runlogs(const std::vector<RunLog>& logs);

// Binary PGM (P5, maxval 255), intensity v -> round(255 v).
std::string encode_pgm(const Image& image);

// Writes PREFIX.pgm and PREFIX.csv.
void write_rendering(const Rendering& r, const std::string& prefix);

// Spectra from a pairs container: column t is window t's target spectrum.
io::SpectrumSet spectra_of(const WindowedPairs& pairs);

}  // namespace rsyn::cli
