#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsyn/dsp.hpp"
#include "rsyn/io.hpp"

namespace rsyn {

constexpr double kSpeedOfLight = 299792458.0;

using Vec3 = std::array<double, 3>;

// Sinusoidal displacement a * sin(2 pi f t + phase).
struct Oscillation {
  Vec3 amplitude{};
  double freq_hz = 0.0;
  double phase = 0.0;
};

// Point scatterer r(t) = origin + velocity t + sum of oscillations.
struct Scatterer {
  std::string name;
  Vec3 origin{};
  Vec3 velocity{};
  std::vector<Oscillation> swings;
  double amplitude = 1.0;

  Vec3 position(double t) const;
};

struct ScattererScene {
  std::vector<Scatterer> markers;
  Vec3 radar{};
  double wavelength = kSpeedOfLight / 5.8e9;
  double noise_sigma = 0.0;  // std dev of the complex noise (each of I, Q gets sigma / sqrt 2)

  double carrier_hz() const { return kSpeedOfLight / wavelength; }
  // Throws ConfigError.
  void validate() const;
};

struct Simulation {
  MoCapStream mocap;
  RadarSignal radar;
};

// MoCap at mocap_rate (one frame past the end so it spans every radar sample)
// and iq(t) = sum a_m exp(-j 4 pi d_m(t) / lambda) + noise at radar_rate.
// A target closing on the radar lands at positive Doppler.
Simulation simulate(const ScattererScene& scene, double duration_s, double mocap_rate, double radar_rate,
                    std::uint64_t seed);

namespace scenes {

ScattererScene stationary(std::size_t markers, double distance = 5.0);
// One marker on the radar boresight; positive speed closes the range.
ScattererScene constant_velocity(double closing_speed, double distance = 5.0);
// One marker swinging along the line of sight with peak radial speed v0.
ScattererScene pendulum(double v0, double freq_hz, double distance = 5.0);

struct GaitParams {
  std::size_t markers = 8;
  double speed = 1.0;       // m/s toward the radar
  double stride_hz = 1.0;   // full gait cycles per second
  double start_distance = 10.0;
  double lateral_offset = 0.8;  // radar sits off the walking line
  double arm_swing = 0.25;  // m
  double leg_swing = 0.30;  // m
  double bob = 0.03;        // m, torso vertical motion at twice the stride rate
};
// Torso markers translate; limb markers swing about it at the stride rate,
// left and right in antiphase, arms opposite their leg.
ScattererScene gait(const GaitParams& p);

}  // namespace scenes

// Dataset recipe; stored as JSON.
struct Recipe {
  std::string scene = "gait";  // stationary | constant_velocity | pendulum | gait
  double duration_s = 8.0;
  double mocap_rate = 250.0;
  double radar_rate = 256.0;
  double carrier_hz = 5.8e9;
  double noise_sigma = 0.01;
  double radar_clock_offset_s = 0.0;  // radar clock reads this much later
  double variation = 0.05;            // relative per-trial spread of speed and rates
  std::size_t markers = 8;
  double speed = 1.0;  // gait speed or constant-velocity closing speed
  double stride_hz = 1.0;
  double v0 = 1.0;  // pendulum peak radial speed
  double swing_hz = 1.0;
  double distance = 5.0;

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static Recipe from_json(const nlohmann::json& j);
  static Recipe load(const std::string& path);
};

// The scene for one trial; parameters vary by `variation` around the recipe.
ScattererScene scene_for_trial(const Recipe& recipe, std::uint64_t trial_seed);

struct Manifest {
  struct Trial {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string mocap;  // file names relative to the manifest
    std::string radar;
    SyncMark sync;
  };
  Recipe recipe;
  std::uint64_t seed = 0;
  std::vector<Trial> trials;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  static Manifest load(const std::string& path);
};

// Writes trial_NNN.mocap.csv, trial_NNN.radar.csv and manifest.json into
// out_dir. Trial i uses seed derive(seed, i).
Manifest make_dataset(const Recipe& recipe, std::size_t n_trials, std::uint64_t seed, const std::string& out_dir);

// Loads, aligns and windows every trial of a manifest, concatenated in trial order.
WindowedPairs pairs_from_manifest(const std::string& manifest_path, const PreprocessConfig& cfg);

// Concatenates pair sets with identical W, M, D and config. Throws DataError.
WindowedPairs concat_pairs(const std::vector<WindowedPairs>& parts);

}  // namespace rsyn
