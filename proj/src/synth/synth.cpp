#include "rsyn/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "../io/binary.hpp"
#include "rsyn/autograd.hpp"
#include "rsyn/error.hpp"
#include "rsyn/log.hpp"

namespace rsyn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool finite(const Vec3& v) { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); }

std::size_t sample_count(double duration, double rate) {
  return static_cast<std::size_t>(std::floor(duration * rate + 1e-9));
}

}  // namespace

Vec3 Scatterer::position(double t) const {
  Vec3 r{origin[0] + velocity[0] * t, origin[1] + velocity[1] * t, origin[2] + velocity[2] * t};
  for (const auto& s : swings) {
    const double k = std::sin(kTwoPi * s.freq_hz * t + s.phase);
    for (int i = 0; i < 3; ++i) r[i] += s.amplitude[i] * k;
  }
  return r;
}

void ScattererScene::validate() const {
  if (markers.empty()) throw ConfigError("scene has no scatterers");
  if (!(wavelength > 0.0) || !std::isfinite(wavelength)) throw ConfigError("wavelength must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be >= 0");
  if (!finite(radar)) throw ConfigError("radar position must be finite");
  for (const auto& m : markers) {
    if (!(m.amplitude >= 0.0) || !std::isfinite(m.amplitude)) {
      throw ConfigError("scatterer '" + m.name + "' amplitude must be >= 0");
    }
    if (!finite(m.origin) || !finite(m.velocity)) throw ConfigError("scatterer '" + m.name + "' not finite");
    for (const auto& s : m.swings) {
      if (!finite(s.amplitude) || !std::isfinite(s.freq_hz) || !std::isfinite(s.phase)) {
        throw ConfigError("scatterer '" + m.name + "' swing not finite");
      }
    }
  }
}

Simulation simulate(const ScattererScene& scene, double duration_s, double mocap_rate, double radar_rate,
                    std::uint64_t seed) {
  scene.validate();
  if (!(mocap_rate > 0.0) || !(radar_rate > 0.0)) throw ConfigError("sample rates must be positive");
  if (!(duration_s >= 1.0 / radar_rate)) throw ConfigError("duration shorter than one radar sample period");
  const std::size_t M = scene.markers.size();

  Simulation sim;
  MoCapStream& mc = sim.mocap;
  mc.markers = M;
  mc.dims = 3;
  for (const auto& m : scene.markers) mc.marker_names.push_back(m.name);
  const std::size_t n_mocap = static_cast<std::size_t>(std::ceil(duration_s * mocap_rate - 1e-9)) + 1;
  mc.t.resize(n_mocap);
  mc.positions.reserve(n_mocap * M * 3);
  for (std::size_t n = 0; n < n_mocap; ++n) {
    const double t = static_cast<double>(n) / mocap_rate;
    mc.t[n] = t;
    for (const auto& m : scene.markers) {
      const auto r = m.position(t);
      mc.positions.insert(mc.positions.end(), r.begin(), r.end());
    }
  }

  RadarSignal& rd = sim.radar;
  rd.carrier_hz = scene.carrier_hz();
  const std::size_t n_radar = sample_count(duration_s, radar_rate);
  rd.t.resize(n_radar);
  rd.iq.resize(n_radar);
  Rng noise(Rng::derive(seed, 0x4e01));
  const double k = 4.0 * std::numbers::pi / scene.wavelength;
  const double s = scene.noise_sigma / std::sqrt(2.0);
  for (std::size_t n = 0; n < n_radar; ++n) {
    const double t = static_cast<double>(n) / radar_rate;
    rd.t[n] = t;
    cdouble acc{0.0, 0.0};
    for (const auto& m : scene.markers) acc += m.amplitude * std::polar(1.0, -k * distance(m.position(t), scene.radar));
    if (s > 0.0) acc += cdouble(noise.normal(0.0, s), noise.normal(0.0, s));
    rd.iq[n] = acc;
  }
  return sim;
}

namespace scenes {

ScattererScene stationary(std::size_t markers, double dist) {
  ScattererScene sc;
  for (std::size_t i = 0; i < markers; ++i) {
    Scatterer m;
    m.name = "p" + std::to_string(i);
    m.origin = {dist + 0.1 * static_cast<double>(i), 0.05 * static_cast<double>(i), 1.0};
    sc.markers.push_back(m);
  }
  sc.radar = {0.0, 0.0, 1.0};
  return sc;
}

ScattererScene constant_velocity(double closing_speed, double dist) {
  ScattererScene sc;
  Scatterer m;
  m.name = "target";
  m.origin = {dist, 0.0, 0.0};
  m.velocity = {-closing_speed, 0.0, 0.0};
  sc.markers.push_back(m);
  return sc;
}

ScattererScene pendulum(double v0, double freq_hz, double dist) {
  ScattererScene sc;
  Scatterer m;
  m.name = "limb";
  m.origin = {dist, 0.0, 0.0};
  m.swings.push_back({{v0 / (kTwoPi * freq_hz), 0.0, 0.0}, freq_hz, 0.0});
  sc.markers.push_back(m);
  return sc;
}

ScattererScene gait(const GaitParams& p) {
  if (p.markers == 0) throw ConfigError("gait needs at least one marker");
  struct Point {
    const char* name;
    double y, z;
    double swing;  // fraction of the limb amplitude
    double phase;
    bool arm;
    double amplitude;
  };
  constexpr double pi = std::numbers::pi;
  // Base skeleton; extra markers are spread along the limbs.
  static const Point base[] = {
      {"head", 0.0, 1.70, 0.0, 0.0, false, 1.0},   {"pelvis", 0.0, 1.00, 0.0, 0.0, false, 1.0},
      {"lhand", 0.22, 0.85, 1.0, pi, true, 0.5},    {"rhand", -0.22, 0.85, 1.0, 0.0, true, 0.5},
      {"lknee", 0.10, 0.50, 0.5, 0.0, false, 0.6},  {"rknee", -0.10, 0.50, 0.5, pi, false, 0.6},
      {"lfoot", 0.10, 0.08, 1.0, 0.0, false, 0.6},  {"rfoot", -0.10, 0.08, 1.0, pi, false, 0.6},
  };
  constexpr std::size_t nbase = sizeof base / sizeof base[0];
  ScattererScene sc;
  sc.radar = {0.0, p.lateral_offset, 1.0};
  for (std::size_t i = 0; i < p.markers; ++i) {
    Point pt = base[i % nbase];
    std::string name = pt.name;
    if (i >= nbase) {
      // Interior limb points: a scaled-down copy of a base point.
      const double f = 1.0 / (1.0 + static_cast<double>(i / nbase));
      pt.swing *= f;
      pt.z = pt.z + (1.0 - f) * 0.3;
      pt.y *= 1.0 + 0.1 * static_cast<double>(i / nbase);
      name += "_" + std::to_string(i / nbase);
    }
    Scatterer m;
    m.name = name;
    m.amplitude = pt.amplitude;
    m.origin = {p.start_distance, pt.y, pt.z};
    m.velocity = {-p.speed, 0.0, 0.0};
    const double amp = (pt.arm ? p.arm_swing : p.leg_swing) * pt.swing;
    if (amp > 0.0) m.swings.push_back({{amp, 0.0, 0.0}, p.stride_hz, pt.phase});
    m.swings.push_back({{0.0, 0.0, p.bob}, 2.0 * p.stride_hz, 0.0});
    sc.markers.push_back(std::move(m));
  }
  return sc;
}

}  // namespace scenes

// ---- recipes

void Recipe::validate() const {
  static const char* kinds[] = {"stationary", "constant_velocity", "pendulum", "gait"};
  bool known = false;
  for (auto k : kinds) known = known || scene == k;
  if (!known) {
    throw ConfigError("unknown scene '" + scene + "' (expected stationary, constant_velocity, pendulum or gait)");
  }
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(duration_s, "duration_s");
  positive(mocap_rate, "mocap_rate");
  positive(radar_rate, "radar_rate");
  positive(carrier_hz, "carrier_hz");
  positive(stride_hz, "stride_hz");
  positive(swing_hz, "swing_hz");
  positive(distance, "distance");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(variation >= 0.0 && variation < 0.5)) throw ConfigError("variation must lie in [0, 0.5)");
  if (!std::isfinite(radar_clock_offset_s)) throw ConfigError("radar_clock_offset_s must be finite");
  if (markers == 0) throw ConfigError("markers must be positive");
}

nlohmann::json Recipe::to_json() const {
  return {{"scene", scene},
          {"duration_s", duration_s},
          {"mocap_rate", mocap_rate},
          {"radar_rate", radar_rate},
          {"carrier_hz", carrier_hz},
          {"noise_sigma", noise_sigma},
          {"radar_clock_offset_s", radar_clock_offset_s},
          {"variation", variation},
          {"markers", markers},
          {"speed", speed},
          {"stride_hz", stride_hz},
          {"v0", v0},
          {"swing_hz", swing_hz},
          {"distance", distance}};
}

Recipe Recipe::from_json(const nlohmann::json& j) {
  Recipe r;
  if (!j.is_object()) throw ConfigError("recipe must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "scene") r.scene = value.get<std::string>();
      else if (key == "duration_s") r.duration_s = value.get<double>();
      else if (key == "mocap_rate") r.mocap_rate = value.get<double>();
      else if (key == "radar_rate") r.radar_rate = value.get<double>();
      else if (key == "carrier_hz") r.carrier_hz = value.get<double>();
      else if (key == "noise_sigma") r.noise_sigma = value.get<double>();
      else if (key == "radar_clock_offset_s") r.radar_clock_offset_s = value.get<double>();
      else if (key == "variation") r.variation = value.get<double>();
      else if (key == "markers") r.markers = value.get<std::size_t>();
      else if (key == "speed") r.speed = value.get<double>();
      else if (key == "stride_hz") r.stride_hz = value.get<double>();
      else if (key == "v0") r.v0 = value.get<double>();
      else if (key == "swing_hz") r.swing_hz = value.get<double>();
      else if (key == "distance") r.distance = value.get<double>();
      else throw ConfigError("recipe: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("recipe: bad value for '" + key + "': " + e.what());
    }
  }
  r.validate();
  return r;
}

Recipe Recipe::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

ScattererScene scene_for_trial(const Recipe& r, std::uint64_t trial_seed) {
  r.validate();
  Rng rng(trial_seed);
  auto vary = [&](double v) { return v * (1.0 + r.variation * (2.0 * rng.uniform() - 1.0)); };
  ScattererScene sc;
  if (r.scene == "stationary") {
    sc = scenes::stationary(r.markers, vary(r.distance));
  } else if (r.scene == "constant_velocity") {
    sc = scenes::constant_velocity(vary(r.speed), r.distance);
  } else if (r.scene == "pendulum") {
    sc = scenes::pendulum(vary(r.v0), vary(r.swing_hz), r.distance);
  } else {
    scenes::GaitParams g;
    g.markers = r.markers;
    g.speed = vary(r.speed);
    g.stride_hz = vary(r.stride_hz);
    g.start_distance = std::max(r.distance, g.speed * r.duration_s + 2.0);
    g.arm_swing = vary(g.arm_swing);
    g.leg_swing = vary(g.leg_swing);
    sc = scenes::gait(g);
  }
  sc.wavelength = kSpeedOfLight / r.carrier_hz;
  sc.noise_sigma = r.noise_sigma;
  return sc;
}

// ---- manifests and datasets

nlohmann::json Manifest::to_json() const {
  nlohmann::json trials_json = nlohmann::json::array();
  for (const auto& t : trials) {
    trials_json.push_back({{"index", t.index},
                           {"seed", t.seed},
                           {"mocap", t.mocap},
                           {"radar", t.radar},
                           {"sync", {{"mocap_time", t.sync.mocap_time}, {"radar_time", t.sync.radar_time}}}});
  }
  return {{"format", "rsyn-manifest"}, {"version", 1}, {"recipe", recipe.to_json()}, {"seed", seed},
          {"trials", trials_json}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    if (j.at("format").get<std::string>() != "rsyn-manifest" || j.at("version").get<int>() != 1) {
      throw FormatError("not a version 1 manifest");
    }
    m.recipe = Recipe::from_json(j.at("recipe"));
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("trials")) {
      Trial tr;
      tr.index = t.at("index").get<std::size_t>();
      tr.seed = t.at("seed").get<std::uint64_t>();
      tr.mocap = t.at("mocap").get<std::string>();
      tr.radar = t.at("radar").get<std::string>();
      tr.sync.mocap_time = t.at("sync").at("mocap_time").get<double>();
      tr.sync.radar_time = t.at("sync").at("radar_time").get<double>();
      m.trials.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

Manifest Manifest::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Manifest make_dataset(const Recipe& recipe, std::size_t n_trials, std::uint64_t seed, const std::string& out_dir) {
  recipe.validate();
  if (n_trials == 0) throw ConfigError("n_trials must be positive");
  std::filesystem::create_directories(out_dir);
  Manifest man;
  man.recipe = recipe;
  man.seed = seed;
  for (std::size_t i = 0; i < n_trials; ++i) {
    Manifest::Trial tr;
    tr.index = i;
    tr.seed = Rng::derive(seed, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "trial_%03zu", i);
    tr.mocap = std::string(stem) + ".mocap.csv";
    tr.radar = std::string(stem) + ".radar.csv";
    auto sim = simulate(scene_for_trial(recipe, tr.seed), recipe.duration_s, recipe.mocap_rate, recipe.radar_rate,
                        tr.seed);
    for (auto& t : sim.radar.t) t += recipe.radar_clock_offset_s;
    tr.sync = {0.0, recipe.radar_clock_offset_s};
    io::save_mocap(sim.mocap, recipe.mocap_rate, (std::filesystem::path(out_dir) / tr.mocap).string());
    io::save_radar(sim.radar, recipe.radar_rate, (std::filesystem::path(out_dir) / tr.radar).string());
    log::info("wrote trial ", i, " (seed ", tr.seed, ")");
    man.trials.push_back(std::move(tr));
  }
  const std::string text = man.to_json().dump(2) + "\n";
  io::write_file((std::filesystem::path(out_dir) / "manifest.json").string(), {text.begin(), text.end()});
  return man;
}

WindowedPairs concat_pairs(const std::vector<WindowedPairs>& parts) {
  if (parts.empty()) throw DataError("concat_pairs: nothing to concatenate");
  WindowedPairs out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.window != out.window || p.markers != out.markers || p.dims != out.dims || p.bins != out.bins ||
        p.cfg.hop != out.cfg.hop || p.cfg.hann != out.cfg.hann || p.cfg.radar_rate != out.cfg.radar_rate) {
      throw DataError("concat_pairs: part " + std::to_string(i) + " has different extents or preprocessing");
    }
    out.count += p.count;
    out.mocap.insert(out.mocap.end(), p.mocap.begin(), p.mocap.end());
    out.spec.insert(out.spec.end(), p.spec.begin(), p.spec.end());
    out.starts.insert(out.starts.end(), p.starts.begin(), p.starts.end());
  }
  return out;
}

WindowedPairs pairs_from_manifest(const std::string& manifest_path, const PreprocessConfig& cfg) {
  const auto man = Manifest::load(manifest_path);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<WindowedPairs> parts;
  for (const auto& tr : man.trials) {
    auto mocap = io::load_mocap((dir / tr.mocap).string());
    auto radar = io::load_radar((dir / tr.radar).string());
    auto [m, r] = io::align(mocap, radar, tr.sync);
    parts.push_back(dsp::build_pairs(m, r, cfg));
  }
  return concat_pairs(parts);
}

}  // namespace rsyn
