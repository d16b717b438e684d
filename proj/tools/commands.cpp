#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli_config.hpp"
#include "render.hpp"
#include "rsyn/checkpoint.hpp"
#include "rsyn/error.hpp"
#include "rsyn/io.hpp"
#include "rsyn/log.hpp"

namespace rsyn::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDataDirEnv = "RSYN_DATA_DIR";

// Flag values land here; the Option pointers tell whether a flag was given.
struct Flags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string data_dir;
  int verbose = 0;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* data_dir_opt = nullptr;

  // Overrides registered by each subcommand, applied after the config file.
  std::vector<std::function<void(CliConfig&)>> overrides;
};

template <class T, class Apply>
CLI::Option* override_opt(CLI::App* app, Flags& flags, const std::string& name, T& storage, const std::string& help,
                          Apply apply) {
  CLI::Option* opt = app->add_option(name, storage, help);
  flags.overrides.push_back([opt, &storage, apply](CliConfig& cfg) {
    if (opt->count() > 0) apply(cfg, storage);
  });
  return opt;
}

void echo(const CliConfig& cfg) { std::cout << nlohmann::json{{"config", cfg.to_json()}}.dump() << std::endl; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " file not found: " + path);
}

void make_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// A spectrogram from either binary container, sniffed by magic.
io::SpectrumSet load_any_spectra(const std::string& path) {
  require_file(path, "spectrogram");
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  if (std::string(magic, 8) == "RSYNPAIR") return spectra_of(io::load_pairs(path));
  return io::load_spectra(path);
}

std::string ckpt_tag(Variant v) {
  switch (v) {
    case Variant::spatial: return "S";
    case Variant::temporal: return "T";
    default: return "ST";
  }
}

// Model and train flags shared by train and ablate.
struct ModelFlags {
  std::size_t d_s = 0, d_t = 0, d_f = 0, layers_s = 0, layers_t = 0, heads_s = 0, heads_t = 0, heads_c = 0;
  double dropout = 0.0;
  std::size_t epochs = 0, batch = 0;
  double lr = 0.0, val_frac = 0.0, weight_decay = 0.0;
};

void add_model_flags(CLI::App* app, Flags& flags, ModelFlags& m) {
  override_opt(app, flags, "--d-s", m.d_s, "Spatial width", [](CliConfig& c, std::size_t v) { c.model.d_s = v; });
  override_opt(app, flags, "--d-t", m.d_t, "Temporal width", [](CliConfig& c, std::size_t v) { c.model.d_t = v; });
  override_opt(app, flags, "--d-f", m.d_f, "Head hidden width", [](CliConfig& c, std::size_t v) { c.model.d_f = v; });
  override_opt(app, flags, "--layers-s", m.layers_s, "Spatial encoder layers",
               [](CliConfig& c, std::size_t v) { c.model.layers_s = v; });
  override_opt(app, flags, "--layers-t", m.layers_t, "Temporal encoder layers",
               [](CliConfig& c, std::size_t v) { c.model.layers_t = v; });
  override_opt(app, flags, "--heads-s", m.heads_s, "Spatial attention heads",
               [](CliConfig& c, std::size_t v) { c.model.heads_s = v; });
  override_opt(app, flags, "--heads-t", m.heads_t, "Temporal attention heads",
               [](CliConfig& c, std::size_t v) { c.model.heads_t = v; });
  override_opt(app, flags, "--heads-c", m.heads_c, "Cross-attention heads",
               [](CliConfig& c, std::size_t v) { c.model.heads_c = v; });
  override_opt(app, flags, "--dropout", m.dropout, "Dropout rate", [](CliConfig& c, double v) { c.model.dropout = v; });
  override_opt(app, flags, "--epochs", m.epochs, "Training epochs", [](CliConfig& c, std::size_t v) { c.train.epochs = v; });
  override_opt(app, flags, "--batch", m.batch, "Batch size", [](CliConfig& c, std::size_t v) { c.train.batch_size = v; });
  override_opt(app, flags, "--lr", m.lr, "Peak learning rate", [](CliConfig& c, double v) { c.train.eta0 = v; });
  override_opt(app, flags, "--val-frac", m.val_frac, "Validation fraction",
               [](CliConfig& c, double v) { c.train.val_frac = v; });
  override_opt(app, flags, "--weight-decay", m.weight_decay, "L2 weight decay",
               [](CliConfig& c, double v) { c.train.weight_decay = v; });
}

// Model extents follow the data.
void fit_model_to(CliConfig& cfg, const WindowedPairs& pairs) {
  cfg.model.markers = pairs.markers;
  cfg.model.dims = pairs.dims;
  cfg.model.window = pairs.window;
  cfg.preprocess = pairs.cfg;
}

void print_epoch(const EpochRecord& e, std::size_t total, const std::string& tag = "") {
  std::ostringstream os;
  os << tag << "epoch " << e.epoch << "/" << total << " train_mse " << e.train_mse << " loss " << e.train_loss;
  if (e.val_mse) os << " val_mse " << *e.val_mse;
  if (e.test_mse) os << " test_mse " << *e.test_mse;
  os << " (" << e.wall_s << " s)";
  log::info(os.str());
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"rsyn: MoCap to Doppler radar spectrogram translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rsyn 1.0");

  Flags flags;
  app.add_option("--config", flags.config_path, "JSON config (sections preprocess, model, train, recipe; key seed)");
  flags.seed_opt = app.add_option("--seed", flags.seed, "Seed for every random draw");
  flags.data_dir_opt = app.add_option("--data-dir", flags.data_dir,
                                      std::string("Base for relative paths (default: $") + kDataDirEnv + ")");
  app.add_flag("-v,--verbose", flags.verbose, "Debug log output on stderr");
  app.add_flag("-q,--quiet", flags.quiet, "Only errors on stderr");

  std::string out, recipe_path, scene, manifest, mocap_path, radar_path, pairs_path, test_path, variant_text = "st";
  std::string checkpoint, spectra_path, compare_path, runlog_path;
  std::size_t trials = 4, markers = 0, window = 0, hop = 0, n_seeds = 3;
  double duration = 0.0, noise = 0.0, clock_offset = 0.0, sync_mocap = 0.0, sync_radar = 0.0, radar_rate = 0.0;
  bool hann = false;
  std::vector<std::string> variant_list{"s", "t", "st"};
  ModelFlags mflags;

  auto add_preprocess_flags = [&](CLI::App* sub) {
    override_opt(sub, flags, "--window", window, "Window length W (also the spectrum bins)",
                 [](CliConfig& c, std::size_t v) { c.preprocess.window = v; });
    override_opt(sub, flags, "--hop", hop, "Hop H", [](CliConfig& c, std::size_t v) { c.preprocess.hop = v; });
    sub->add_flag("--hann", hann, "Hann analysis window instead of rectangular");
    flags.overrides.push_back([&hann](CliConfig& c) {
      if (hann) c.preprocess.hann = true;
    });
  };

  auto* synth = app.add_subcommand("synth", "Simulate paired MoCap and radar trials");
  synth->add_option("--recipe", recipe_path, "Recipe JSON (overrides the config recipe section)");
  override_opt(synth, flags, "--scene", scene, "stationary | constant_velocity | pendulum | gait",
               [](CliConfig& c, const std::string& v) { c.recipe.scene = v; });
  synth->add_option("--trials", trials, "Number of trials")->capture_default_str();
  override_opt(synth, flags, "--duration", duration, "Seconds per trial",
               [](CliConfig& c, double v) { c.recipe.duration_s = v; });
  override_opt(synth, flags, "--markers", markers, "Markers per trial",
               [](CliConfig& c, std::size_t v) { c.recipe.markers = v; });
  override_opt(synth, flags, "--noise", noise, "Complex noise std dev",
               [](CliConfig& c, double v) { c.recipe.noise_sigma = v; });
  override_opt(synth, flags, "--clock-offset", clock_offset, "Radar clock offset in seconds",
               [](CliConfig& c, double v) { c.recipe.radar_clock_offset_s = v; });
  synth->add_option("--out", out, "Output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Align, segment and transform recordings into a pairs file");
  auto* man_opt = pre->add_option("--manifest", manifest, "Manifest written by synth");
  auto* mocap_opt = pre->add_option("--mocap", mocap_path, "MoCap CSV");
  auto* radar_opt = pre->add_option("--radar", radar_path, "Radar CSV");
  man_opt->excludes(mocap_opt)->excludes(radar_opt);
  mocap_opt->needs(radar_opt);
  radar_opt->needs(mocap_opt);
  pre->add_option("--sync-mocap", sync_mocap, "Sync instant on the MoCap clock (s)");
  pre->add_option("--sync-radar", sync_radar, "Sync instant on the radar clock (s)");
  add_preprocess_flags(pre);
  pre->add_option("--out", out, "Output pairs file")->required();

  auto* tr = app.add_subcommand("train", "Train one model variant");
  tr->add_option("--pairs", pairs_path, "Training pairs file")->required();
  tr->add_option("--test", test_path, "Held-out pairs file evaluated each epoch");
  tr->add_option("--variant", variant_text, "s | t | st")->capture_default_str();
  add_model_flags(tr, flags, mflags);
  tr->add_option("--out", out, "Output directory")->required();

  auto* ab = app.add_subcommand("ablate", "Train S, T and S+T over several seeds");
  ab->add_option("--pairs", pairs_path, "Training pairs file")->required();
  ab->add_option("--seeds", n_seeds, "Seeds seed, seed+1, ...")->capture_default_str();
  ab->add_option("--variants", variant_list, "Variants to compare")->capture_default_str();
  add_model_flags(ab, flags, mflags);
  ab->add_option("--out", out, "Output directory")->required();

  auto* inf = app.add_subcommand("infer", "Predict spectra from MoCap with a checkpoint");
  inf->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* inf_mocap = inf->add_option("--mocap", mocap_path, "MoCap CSV");
  auto* inf_pairs = inf->add_option("--pairs", pairs_path, "Pairs file (MoCap windows are used)");
  inf_mocap->excludes(inf_pairs);
  add_preprocess_flags(inf);
  override_opt(inf, flags, "--radar-rate", radar_rate, "Output rate the MoCap is resampled to (Hz)",
               [](CliConfig& c, double v) { c.preprocess.radar_rate = v; });
  inf->add_option("--out", out, "Output spectra file")->required();

  auto* ren = app.add_subcommand("render", "Render spectrograms or run logs to PGM + CSV");
  auto* ren_spec = ren->add_option("--spectra", spectra_path, "Spectra or pairs file");
  ren->add_option("--compare", compare_path, "Second spectrogram stacked below the first")->needs(ren_spec);
  auto* ren_log = ren->add_option("--runlog", runlog_path, "Run log or ablation log (JSONL)");
  ren_spec->excludes(ren_log);
  ren->add_option("--out", out, "Output prefix (writes PREFIX.pgm and PREFIX.csv)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    log::verbosity() = flags.quiet ? log::Level::quiet : (flags.verbose > 0 ? log::Level::debug : log::Level::info);

    CliConfig cfg;
    cfg.command = app.get_subcommands().front()->get_name();
    if (flags.data_dir_opt->count() > 0) {
      cfg.data_dir = flags.data_dir;
    } else if (const char* env = std::getenv(kDataDirEnv)) {
      cfg.data_dir = env;
    }
    if (!flags.config_path.empty()) apply_config_file(cfg, resolve(cfg, flags.config_path));
    if (flags.seed_opt->count() > 0) cfg.seed = flags.seed;
    if (cfg.command == "synth" && !recipe_path.empty()) {
      apply_config_json(cfg, {{"recipe", nlohmann::json::parse(read_file(resolve(cfg, recipe_path)))}});
    }
    for (auto& f : flags.overrides) f(cfg);
    cfg.train.seed = cfg.seed;
    out = resolve(cfg, out);
    cfg.paths["out"] = out;

    if (cfg.command == "synth") {
      cfg.validate();
      if (trials == 0) throw ConfigError("--trials must be at least 1");
      cfg.paths["trials"] = trials;
      echo(cfg);
      const auto man = make_dataset(cfg.recipe, trials, cfg.seed, out);
      std::cout << "synth: " << man.trials.size() << " trials, scene " << cfg.recipe.scene << ", "
                << cfg.recipe.markers << " markers, " << cfg.recipe.duration_s << " s -> "
                << (fs::path(out) / "manifest.json").string() << std::endl;
      return 0;
    }

    if (cfg.command == "preprocess") {
      WindowedPairs pairs;
      if (!manifest.empty()) {
        manifest = resolve(cfg, manifest);
        require_file(manifest, "manifest");
        cfg.paths["manifest"] = manifest;
        const auto man = Manifest::load(manifest);
        cfg.preprocess.mocap_rate = man.recipe.mocap_rate;
        cfg.preprocess.radar_rate = man.recipe.radar_rate;
        cfg.preprocess.validate();
        echo(cfg);
        pairs = pairs_from_manifest(manifest, cfg.preprocess);
      } else if (!mocap_path.empty()) {
        mocap_path = resolve(cfg, mocap_path);
        radar_path = resolve(cfg, radar_path);
        require_file(mocap_path, "MoCap");
        require_file(radar_path, "radar");
        cfg.paths["mocap"] = mocap_path;
        cfg.paths["radar"] = radar_path;
        cfg.paths["sync"] = {{"mocap_time", sync_mocap}, {"radar_time", sync_radar}};
        MoCapFileInfo minfo;
        RadarFileInfo rinfo;
        const auto mocap = io::load_mocap(mocap_path, &minfo);
        const auto radar = io::load_radar(radar_path, &rinfo);
        cfg.preprocess.mocap_rate = minfo.rate;
        cfg.preprocess.radar_rate = rinfo.rate;
        cfg.preprocess.validate();
        echo(cfg);
        auto [m, r] = io::align(mocap, radar, SyncMark{sync_mocap, sync_radar});
        pairs = dsp::build_pairs(m, r, cfg.preprocess);
      } else {
        throw ConfigError("preprocess needs --manifest or --mocap with --radar");
      }
      make_parent(out);
      io::save_pairs(pairs, out);
      std::cout << "pairs: T=" << pairs.count << " W=" << pairs.window << " M=" << pairs.markers
                << " D=" << pairs.dims << " -> " << out << std::endl;
      return 0;
    }

    if (cfg.command == "train" || cfg.command == "ablate") {
      pairs_path = resolve(cfg, pairs_path);
      require_file(pairs_path, "pairs");
      cfg.paths["pairs"] = pairs_path;
      const auto pairs = io::load_pairs(pairs_path);
      fit_model_to(cfg, pairs);
      cfg.validate();
      fs::create_directories(out);

      if (cfg.command == "train") {
        const Variant variant = parse_variant(variant_text);
        cfg.paths["variant"] = to_string(variant);
        WindowedPairs test;
        TrainOptions opts;
        if (!test_path.empty()) {
          test_path = resolve(cfg, test_path);
          require_file(test_path, "test pairs");
          cfg.paths["test"] = test_path;
          test = io::load_pairs(test_path);
          check_compatible(cfg.model, test);
          opts.test = &test;
        }
        echo(cfg);
        opts.final_checkpoint = (fs::path(out) / "model.ckpt").string();
        opts.best_checkpoint = (fs::path(out) / "best.ckpt").string();
        const std::size_t total = cfg.train.epochs;
        opts.on_epoch = [total](const EpochRecord& e) { print_epoch(e, total); };
        const auto log = train_variant(pairs, cfg.model, variant, cfg.train, opts);
        log.save((fs::path(out) / "runlog.jsonl").string());
        const auto& last = log.epochs.back();
        std::cout << "final: kind " << log.kind << " epochs " << last.epoch << " train_mse " << last.train_mse;
        if (last.val_mse) std::cout << " val_mse " << *last.val_mse;
        if (last.test_mse) std::cout << " test_mse " << *last.test_mse;
        std::cout << std::endl;
        return 0;
      }

      if (n_seeds == 0) throw ConfigError("--seeds must be at least 1");
      std::vector<Variant> kinds;
      for (const auto& v : variant_list) kinds.push_back(parse_variant(v));
      cfg.paths["seeds"] = n_seeds;
      cfg.paths["variants"] = variant_list;
      echo(cfg);
      std::vector<RunLog> logs;
      std::string jsonl;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        TrainConfig tcfg = cfg.train;
        tcfg.seed = cfg.seed + s;
        const auto runs = run_ablation(pairs, cfg.model, kinds, tcfg, [&](Variant v) {
          TrainOptions o;
          o.final_checkpoint = (fs::path(out) / (ckpt_tag(v) + "_seed" + std::to_string(tcfg.seed) + ".ckpt")).string();
          const std::size_t total = tcfg.epochs;
          const std::string tag = to_string(v) + " seed " + std::to_string(tcfg.seed) + " ";
          o.on_epoch = [total, tag](const EpochRecord& e) { print_epoch(e, total, tag); };
          return o;
        });
        for (const auto& r : runs) {
          log::info("run ", r.kind, " seed ", r.seed, " final train_mse ", r.epochs.back().train_mse);
          jsonl += r.serialize();
          logs.push_back(r);
        }
      }
      write_text((fs::path(out) / "ablation.jsonl").string(), jsonl);
      const auto table = format_ablation_table(ablation_table(logs));
      write_text((fs::path(out) / "ablation_table.txt").string(), table);
      std::cout << table << std::flush;
      return 0;
    }

    if (cfg.command == "infer") {
      checkpoint = resolve(cfg, checkpoint);
      require_file(checkpoint, "checkpoint");
      cfg.paths["checkpoint"] = checkpoint;
      auto model = load_checkpoint(checkpoint);
      cfg.model = model.config();
      cfg.paths["variant"] = to_string(model.variant());
      WindowedPairs input;
      if (!pairs_path.empty()) {
        pairs_path = resolve(cfg, pairs_path);
        require_file(pairs_path, "pairs");
        cfg.paths["pairs"] = pairs_path;
        input = io::load_pairs(pairs_path);
        if (window != 0 && window != input.window) {
          throw ConfigError("--window " + std::to_string(window) + " does not match the pairs file (W=" +
                            std::to_string(input.window) + ")");
        }
        cfg.preprocess = input.cfg;
        echo(cfg);
      } else if (!mocap_path.empty()) {
        mocap_path = resolve(cfg, mocap_path);
        require_file(mocap_path, "MoCap");
        cfg.paths["mocap"] = mocap_path;
        MoCapFileInfo minfo;
        const auto mocap = io::load_mocap(mocap_path, &minfo);
        if (window == 0) cfg.preprocess.window = cfg.model.window;
        if (hop == 0 && cfg.preprocess.hop > cfg.preprocess.window) cfg.preprocess.hop = cfg.preprocess.window;
        cfg.preprocess.mocap_rate = minfo.rate;
        cfg.preprocess.validate();
        echo(cfg);
        input.window = cfg.preprocess.window;
        input.markers = mocap.markers;
        input.dims = mocap.dims;
        input.bins = cfg.preprocess.window;
        input.cfg = cfg.preprocess;
        input.mocap = dsp::mocap_windows(mocap, cfg.preprocess, &input.count);
      } else {
        throw ConfigError("infer needs --mocap or --pairs");
      }
      check_compatible(cfg.model, input);
      io::SpectrumSet pred;
      pred.frames = input.count;
      pred.bins = cfg.model.window;
      pred.data.reserve(pred.frames * pred.bins);
      for (std::size_t t = 0; t < input.count; ++t) {
        const auto y = model.predict(input.mocap_window(t));
        for (double v : y) {
          if (!std::isfinite(v) || v < 0.0) throw DataError("infer: prediction is not a finite nonnegative value");
        }
        pred.data.insert(pred.data.end(), y.begin(), y.end());
      }
      make_parent(out);
      io::save_spectra(pred, out);
      std::cout << "predicted: T=" << pred.frames << " F=" << pred.bins << " -> " << out << std::endl;
      return 0;
    }

    if (cfg.command == "render") {
      Rendering r;
      if (!runlog_path.empty()) {
        runlog_path = resolve(cfg, runlog_path);
        require_file(runlog_path, "run log");
        cfg.paths["runlog"] = runlog_path;
        echo(cfg);
        r = render_runlogs(RunLog::load_all(runlog_path));
      } else if (!spectra_path.empty()) {
        spectra_path = resolve(cfg, spectra_path);
        cfg.paths["spectra"] = spectra_path;
        std::vector<io::SpectrumSet> panels{load_any_spectra(spectra_path)};
        if (!compare_path.empty()) {
          compare_path = resolve(cfg, compare_path);
          cfg.paths["compare"] = compare_path;
          panels.push_back(load_any_spectra(compare_path));
        }
        echo(cfg);
        r = render_spectra(panels);
      } else {
        throw ConfigError("render needs --spectra or --runlog");
      }
      make_parent(out);
      write_rendering(r, out);
      std::cout << "render: " << r.image.width << " x " << r.image.height << " -> " << out << ".pgm, " << out
                << ".csv" << std::endl;
      return 0;
    }
    throw ConfigError("unknown command " + cfg.command);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace rsyn::cli
