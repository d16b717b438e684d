#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rsyn/autograd.hpp"
#include "rsyn/dsp.hpp"
#include "rsyn/error.hpp"

using namespace rsyn;

namespace {

// O(N^2) reference with per-term angles; no shared code with dsp::dft.
std::vector<cdouble> naive_dft(const std::vector<cdouble>& x) {
  const std::size_t n = x.size();
  std::vector<cdouble> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0, im = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const long double a = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * j) % n) / n;
      re += x[j].real() * std::cos(a) - x[j].imag() * std::sin(a);
      im += x[j].real() * std::sin(a) + x[j].imag() * std::cos(a);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

MoCapStream single_channel(const std::vector<double>& t, const std::vector<double>& x) {
  MoCapStream s;
  s.t = t;
  s.markers = 1;
  s.dims = 1;
  s.positions = x;
  return s;
}

std::vector<cdouble> random_iq(std::size_t n, Rng& rng) {
  std::vector<cdouble> iq(n);
  for (auto& v : iq) v = {rng.normal(0, 1), rng.normal(0, 1)};
  return iq;
}

}  // namespace

TEST_CASE("segment count formula") {
  CHECK(dsp::segment_count(1024, 256, 64) == 13);
  CHECK(dsp::segment_count(256, 256, 64) == 1);
  CHECK(dsp::segment_count(256 + 63, 256, 64) == 1);
  CHECK_THROWS_AS(dsp::segment_count(10, 16, 4), DataError);

  // property: matches a counting loop
  for (std::size_t W = 1; W <= 12; ++W) {
    for (std::size_t H = 1; H <= W; ++H) {
      for (std::size_t N = W; N <= 40; ++N) {
        std::size_t c = 0;
        for (std::size_t s = 0; s + W <= N; s += H) ++c;
        CHECK(dsp::segment_count(N, W, H) == c);
        auto starts = dsp::segment_windows(N, W, H);
        CHECK(starts.size() == c);
        CHECK(starts.back() + W <= N);
      }
    }
  }
}

TEST_CASE("config validation") {
  PreprocessConfig c;
  CHECK_NOTHROW(c.validate());
  c.hop = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.hop = 300;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PreprocessConfig{};
  c.radar_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("resample_linear") {
  std::vector<double> t, x;
  for (int i = 0; i <= 250; ++i) t.push_back(i / 250.0);

  x.assign(t.size(), 2.5);
  auto c = dsp::resample_linear(single_channel(t, x), 256.0);
  CHECK(c.frames() == 257);
  for (double v : c.positions) CHECK(v == 2.5);
  CHECK(c.t.front() == 0.0);
  CHECK(c.t.back() == doctest::Approx(1.0).epsilon(1e-15));

  auto lin = dsp::resample_linear(single_channel(t, t), 256.0);
  for (std::size_t i = 0; i < lin.frames(); ++i) CHECK(std::abs(lin.positions[i] - lin.t[i]) < 1e-12);

  x.clear();
  for (double ti : t) x.push_back(std::sin(2 * std::numbers::pi * 5 * ti));
  auto sine = dsp::resample_linear(single_channel(t, x), 256.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < sine.frames(); ++i) {
    worst = std::max(worst, std::abs(sine.positions[i] - std::sin(2 * std::numbers::pi * 5 * sine.t[i])));
  }
  // Analytic oracle for linear interpolation: |err| <= h^2/8 * max|x''| with
  // h = 1/250 s and max|x''| = (10 pi)^2, i.e. 1.974e-3. The 256 Hz grid walks
  // through every phase of the 250 Hz grid, so the bound is nearly attained.
  const double bound = std::pow(1.0 / 250.0, 2) / 8.0 * std::pow(10 * std::numbers::pi, 2);
  CHECK(worst <= bound * (1 + 1e-9));
  CHECK(worst > 0.9 * bound);

  CHECK_THROWS_AS(dsp::resample_linear(single_channel({0.0}, {1.0}), 256.0), DataError);
}

TEST_CASE("gap fill interpolates interior and holds edges") {
  MoCapStream s = single_channel({0, 1, 2, 3, 4, 5}, {9, 1, 9, 9, 4, 9});
  s.valid = {0, 1, 0, 0, 1, 0};
  std::size_t repaired = 0;
  auto f = dsp::fill_gaps(s, &repaired);
  CHECK(repaired == 4);
  CHECK(f.positions == std::vector<double>{1, 1, 2, 3, 4, 4});
  CHECK_FALSE(f.has_gaps());

  s.valid.assign(6, 0);
  CHECK_THROWS_AS(dsp::fill_gaps(s), DataError);
}

TEST_CASE("dft matches naive oracle for radix-2 and odd lengths") {
  Rng rng(31);
  for (std::size_t n : {1u, 2u, 8u, 12u, 64u, 100u}) {
    auto x = random_iq(n, rng);
    auto a = dsp::dft(x);
    auto b = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-10);
  }
}

TEST_CASE("stft on simple signals") {
  PreprocessConfig cfg;
  cfg.window = 8;
  cfg.hop = 8;
  std::vector<cdouble> ones(8, cdouble(1, 0));
  auto s = dsp::stft_density(ones, cfg);
  CHECK(s.bins == 8);
  CHECK(s.frames == 1);
  CHECK(std::abs(s.at(0, 0)) > 0.0);
  for (std::size_t k = 1; k < 8; ++k) CHECK(std::abs(s.at(k, 0)) < 1e-12);

  for (std::size_t k0 = 0; k0 < 8; ++k0) {
    std::vector<cdouble> tone(8);
    for (std::size_t n = 0; n < 8; ++n) tone[n] = std::polar(1.0, 2 * std::numbers::pi * k0 * n / 8.0);
    auto st = dsp::stft_density(tone, cfg);
    for (std::size_t k = 0; k < 8; ++k) {
      if (k == k0) CHECK(std::abs(st.at(k, 0)) > 0.1);
      else CHECK(std::abs(st.at(k, 0)) < 1e-12);
    }
  }

  cfg.window = 16;
  CHECK_THROWS_AS(dsp::stft_density(ones, cfg), DataError);
}

TEST_CASE("stft vs naive DFT on random 512-sample signals, and Parseval") {
  Rng rng(41);
  PreprocessConfig cfg;  // W=256, H=64, F_r=256
  auto iq = random_iq(512, rng);
  auto s = dsp::stft_density(iq, cfg);
  CHECK(s.frames == 5);
  const double scale = 1.0 / std::sqrt(cfg.radar_rate * cfg.window);
  const double df = cfg.radar_rate / cfg.window;
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::vector<cdouble> seg(iq.begin() + t * 64, iq.begin() + t * 64 + 256);
    auto ref = naive_dft(seg);
    double power = 0.0, density = 0.0;
    for (std::size_t k = 0; k < 256; ++k) {
      CHECK(std::abs(s.at(k, t) - ref[k] * scale) < 1e-9);
      density += std::norm(s.at(k, t)) * df;
    }
    for (auto v : seg) power += std::norm(v) / 256.0;
    CHECK(std::abs(density - power) < 1e-9);
  }
}

TEST_CASE("hann option changes the window energy normalization") {
  PreprocessConfig cfg;
  cfg.window = 64;
  cfg.hop = 64;
  cfg.hann = true;
  Rng rng(2);
  auto iq = random_iq(64, rng);
  auto s = dsp::stft_density(iq, cfg);
  double e = 0.0, wsum = 0.0, weighted = 0.0;
  for (std::size_t n = 0; n < 64; ++n) {
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / 64.0);
    wsum += w * w;
    weighted += std::norm(iq[n]) * w * w;
  }
  for (std::size_t k = 0; k < 64; ++k) e += std::norm(s.at(k, 0)) * (cfg.radar_rate / 64);
  CHECK(std::abs(e - weighted / wsum) < 1e-9);
}

TEST_CASE("center shift") {
  Spectrogram s{4, 1, {1, 2, 3, 4}};
  auto c = dsp::center_shift(s);
  CHECK(c.data == std::vector<cdouble>{3, 4, 1, 2});
  CHECK(dsp::center_shift(c).data == s.data);

  Spectrogram odd{5, 1, {0, 1, 2, 3, 4}};
  CHECK(dsp::center_shift(odd).data == std::vector<cdouble>{3, 4, 0, 1, 2});

  Rng rng(4);
  Spectrogram r{16, 3, random_iq(48, rng)};
  auto rs = dsp::center_shift(r);
  for (std::size_t t = 0; t < 3; ++t) {
    double a = 0, b = 0;
    for (std::size_t f = 0; f < 16; ++f) {
      a += std::norm(r.at(f, t));
      b += std::norm(rs.at(f, t));
    }
    CHECK(std::abs(a - b) < 1e-12);
  }
  // permutation: every source row appears exactly once
  std::vector<int> hits(16, 0);
  for (std::size_t f = 0; f < 16; ++f) {
    for (std::size_t g = 0; g < 16; ++g) {
      if (rs.at(g, 0) == r.at(f, 0)) ++hits[f];
    }
  }
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("sqrt compression") {
  Spectrogram s{3, 1, {cdouble(0, 0), cdouble(3, 4), cdouble(-1, 0)}};
  auto c = dsp::compress_sqrt(s);
  CHECK(c.data[0] == 0.0);
  CHECK(c.data[1] == doctest::Approx(2.2360679775).epsilon(1e-10));
  CHECK(c.data[2] == 1.0);

  Rng rng(8);
  Spectrogram r{200, 1, random_iq(200, rng)};
  auto cr = dsp::compress_sqrt(r);
  for (std::size_t i = 0; i + 1 < 200; ++i) {
    if (std::abs(r.data[i]) < std::abs(r.data[i + 1])) CHECK(cr.data[i] < cr.data[i + 1]);
    CHECK(cr.data[i] >= 0.0);
  }
  // ranking by column energy survives shift + compression
  auto shifted = dsp::compress_sqrt(dsp::center_shift(r));
  double sum_a = 0, sum_b = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    sum_a += cr.data[i];
    sum_b += shifted.data[i];
  }
  CHECK(std::abs(sum_a - sum_b) < 1e-10);
}

TEST_CASE("build_pairs: stationary scene puts all energy in the zero-Doppler row") {
  PreprocessConfig cfg;
  cfg.window = 64;
  cfg.hop = 16;
  MoCapStream m;
  m.markers = 2;
  m.dims = 3;
  for (int i = 0; i < 750; ++i) {  // 3 s at 250 Hz
    m.t.push_back(i / 250.0);
    for (double v : {0.1, 0.2, 0.3, -0.4, 0.5, 1.6}) m.positions.push_back(v);
  }
  RadarSignal r;
  for (int i = 0; i < 768; ++i) {
    r.t.push_back(i / 256.0);
    r.iq.push_back(std::polar(1.3, 0.7));
  }
  auto pairs = dsp::build_pairs(m, r, cfg);
  CHECK_NOTHROW(pairs.validate());
  CHECK(pairs.markers == 2);
  CHECK(pairs.bins == 64);
  // overlap is [0, 2.996] s -> samples 0..767 with t <= 2.996
  const std::size_t n = 767;
  CHECK(pairs.count == dsp::segment_count(n, 64, 16));
  for (std::size_t t = 0; t < pairs.count; ++t) {
    double total = 0.0, off = 0.0;
    for (std::size_t f = 0; f < 64; ++f) {
      const double e = std::pow(pairs.spectrum(t)[f], 4);  // |S_c|^2
      total += e;
      if (f != 32) off += e;
    }
    CHECK(off < 1e-9 * total);
  }
  // MoCap windows carry the (constant) marker positions
  CHECK(pairs.mocap_window(0)[5] == doctest::Approx(1.6));

  // identical inputs, identical output
  auto again = dsp::build_pairs(m, r, cfg);
  CHECK(again.spec == pairs.spec);
  CHECK(again.mocap == pairs.mocap);
}

TEST_CASE("build_pairs errors and single window") {
  PreprocessConfig cfg;
  cfg.window = 64;
  cfg.hop = 16;
  MoCapStream m;
  m.markers = 1;
  m.dims = 3;
  for (int i = 0; i < 10; ++i) {
    m.t.push_back(i / 250.0);
    m.positions.insert(m.positions.end(), {0.0, 0.0, 0.0});
  }
  RadarSignal r;
  for (int i = 0; i < 512; ++i) {
    r.t.push_back(i / 256.0);
    r.iq.push_back(1.0);
  }
  CHECK_THROWS_AS(dsp::build_pairs(m, r, cfg), DataError);

  // exactly W samples of overlap -> one pair
  m.t.clear();
  m.positions.clear();
  for (int i = 0; i <= 63; ++i) {
    m.t.push_back(i / 256.0);
    m.positions.insert(m.positions.end(), {0.0, 0.0, 0.0});
  }
  auto one = dsp::build_pairs(m, r, cfg);
  CHECK(one.count == 1);

  cfg.radar_rate = 300.0;
  CHECK_THROWS_AS(dsp::build_pairs(m, r, cfg), ConfigError);
}
