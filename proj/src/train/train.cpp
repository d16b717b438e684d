#include "rsyn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

#include "../io/binary.hpp"
#include "rsyn/checkpoint.hpp"
#include "rsyn/error.hpp"
#include "rsyn/kernels.hpp"
#include "rsyn/log.hpp"

namespace rsyn {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw ConfigError("eta0 must be positive and finite");
  if (!(lr_start >= 0.0) || !(lr_start < eta0)) throw ConfigError("lr_start must lie in [0, eta0)");
  if (!(lr_end >= 0.0) || !(lr_end < eta0)) throw ConfigError("lr_end must lie in [0, eta0)");
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in (0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw ConfigError("val_frac must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"batch_size", batch_size},   {"eta0", eta0},
          {"lr_start", lr_start}, {"lr_end", lr_end},           {"warmup_frac", warmup_frac},
          {"weight_decay", weight_decay}, {"seed", seed},       {"val_frac", val_frac}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("eta0", c.eta0);
    get("lr_start", c.lr_start);
    get("lr_end", c.lr_end);
    get("warmup_frac", c.warmup_frac);
    get("weight_decay", c.weight_decay);
    get("seed", c.seed);
    get("val_frac", c.val_frac);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ContractError("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                        std::to_string(target.size()));
  }
  if (pred.empty()) throw ContractError("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

std::size_t warmup_steps(std::size_t total, const TrainConfig& cfg) {
  // guard against 0.1 * 50 landing a hair above 5
  const double w = std::ceil(cfg.warmup_frac * static_cast<double>(total) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(w));
}

double one_cycle_lr(std::size_t step, std::size_t total, const TrainConfig& cfg) {
  if (step >= total) {
    throw ContractError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + ")");
  }
  const std::size_t warm = warmup_steps(total, cfg);
  if (step <= warm) {
    return cfg.lr_start + (cfg.eta0 - cfg.lr_start) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const std::size_t last = total - 1;
  return cfg.eta0 + (cfg.lr_end - cfg.eta0) * static_cast<double>(step - warm) / static_cast<double>(last - warm);
}

void adam_step(std::span<Parameter* const> params, const std::map<const Parameter*, Tensor>& grads, AdamState& state,
               double lr, double weight_decay) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter* p : params) {
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.empty()) {
      m = Tensor(p->value.shape(), 0.0);
      v = Tensor(p->value.shape(), 0.0);
    }
    auto it = grads.find(p);
    const double* g = it == grads.end() ? nullptr : it->second.ptr();
    if (g && it->second.size() != p->value.size()) {
      throw ContractError("adam_step: gradient for '" + p->name + "' has shape " + to_string(it->second.shape()) +
                          ", parameter has " + to_string(p->value.shape()));
    }
    double* theta = p->value.ptr();
    double* mp = m.ptr();
    double* vp = v.ptr();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = (g ? g[i] : 0.0) + weight_decay * theta[i];
      mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * gi;
      vp[i] = state.beta2 * vp[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = mp[i] / c1;
      const double vhat = vp[i] / c2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---- RunLog

std::vector<double> RunLog::lr_trace() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.insert(out.end(), e.lr.begin(), e.lr.end());
  return out;
}

std::size_t RunLog::total_steps() const {
  std::size_t n = 0;
  for (const auto& e : epochs) n += e.lr.size();
  return n;
}

std::string RunLog::serialize() const {
  std::ostringstream out;
  nlohmann::json head{{"type", "run"},
                      {"kind", kind},
                      {"seed", seed},
                      {"config", config},
                      {"train_indices", train_indices},
                      {"val_indices", val_indices}};
  out << head.dump() << '\n';
  for (const auto& e : epochs) {
    nlohmann::json j{{"type", "epoch"},           {"kind", kind},         {"epoch", e.epoch},
                     {"train_mse", e.train_mse},  {"train_loss", e.train_loss}, {"lr", e.lr}};
    j["val_mse"] = e.val_mse ? nlohmann::json(*e.val_mse) : nlohmann::json(nullptr);
    j["test_mse"] = e.test_mse ? nlohmann::json(*e.test_mse) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  return out.str();
}

namespace {

std::vector<RunLog> parse_logs(const std::string& text, const std::string& what) {
  std::vector<RunLog> logs;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "run") {
        RunLog log;
        log.kind = j.at("kind").get<std::string>();
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config = j.at("config");
        log.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
        log.val_indices = j.at("val_indices").get<std::vector<std::size_t>>();
        logs.push_back(std::move(log));
      } else if (type == "epoch") {
        if (logs.empty()) throw ParseError(what + ":" + std::to_string(lineno) + ": epoch record before run header");
        EpochRecord e;
        e.epoch = j.at("epoch").get<std::size_t>();
        e.train_mse = j.at("train_mse").get<double>();
        e.train_loss = j.at("train_loss").get<double>();
        if (!j.at("val_mse").is_null()) e.val_mse = j.at("val_mse").get<double>();
        if (!j.at("test_mse").is_null()) e.test_mse = j.at("test_mse").get<double>();
        e.lr = j.at("lr").get<std::vector<double>>();
        logs.back().epochs.push_back(std::move(e));
      } else {
        throw ParseError(what + ":" + std::to_string(lineno) + ": unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (logs.empty()) throw ParseError(what + ": no run records");
  return logs;
}

}  // namespace

RunLog RunLog::parse(const std::string& text) {
  auto logs = parse_logs(text, "<runlog>");
  if (logs.size() != 1) throw ParseError("runlog holds " + std::to_string(logs.size()) + " runs, expected 1");
  return std::move(logs.front());
}

void RunLog::save(const std::string& path) const {
  const auto s = serialize();
  io::write_file(path, std::vector<char>(s.begin(), s.end()));
}

RunLog RunLog::load(const std::string& path) {
  auto logs = load_all(path);
  if (logs.size() != 1) throw ParseError(path + ": holds " + std::to_string(logs.size()) + " runs, expected 1");
  return std::move(logs.front());
}

std::vector<RunLog> RunLog::load_all(const std::string& path) {
  const auto bytes = io::read_file(path);
  return parse_logs(std::string(bytes.begin(), bytes.end()), path);
}

// ---- training

Split split_indices(std::size_t count, double val_frac, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, 0x5b11));
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(count)));
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void check_compatible(const ModelConfig& cfg, const WindowedPairs& pairs) {
  std::string diff;
  auto cmp = [&](const char* what, std::size_t model, std::size_t data) {
    if (model != data) {
      diff += std::string(diff.empty() ? "" : "; ") + what + ": model expects " + std::to_string(model) +
              ", data has " + std::to_string(data);
    }
  };
  cmp("M (markers)", cfg.markers, pairs.markers);
  cmp("D (dims)", cfg.dims, pairs.dims);
  cmp("W (window)", cfg.window, pairs.window);
  cmp("F (bins)", cfg.window, pairs.bins);
  if (!diff.empty()) throw ConfigError("model/data mismatch: " + diff);
}

namespace {

Tensor window_tensor(const WindowedPairs& pairs, std::size_t t) {
  auto w = pairs.mocap_window(t);
  return Tensor({pairs.window, pairs.markers, pairs.dims}, std::vector<double>(w.begin(), w.end()));
}

Tensor target_tensor(const WindowedPairs& pairs, std::size_t t) {
  auto s = pairs.spectrum(t);
  return Tensor({pairs.bins}, std::vector<double>(s.begin(), s.end()));
}

std::vector<Parameter*> raw(const SttModel& model) {
  std::vector<Parameter*> out;
  for (const auto& p : model.parameters()) out.push_back(p.get());
  return out;
}

}  // namespace

double evaluate(const SttModel& model, const WindowedPairs& pairs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("evaluate: no windows");
  double s = 0.0;
  for (auto t : indices) {
    const auto y = model.predict(pairs.mocap_window(t));
    s += mse_loss(y, pairs.spectrum(t));
  }
  return s / static_cast<double>(indices.size());
}

RunLog train(const WindowedPairs& pairs, SttModel& model, const TrainConfig& tcfg, const TrainOptions& opts) {
  tcfg.validate();
  pairs.validate();
  if (pairs.count == 0) throw DataError("train: empty dataset");
  check_compatible(model.config(), pairs);
  if (opts.test) {
    opts.test->validate();
    check_compatible(model.config(), *opts.test);
  }

  const Split split = split_indices(pairs.count, tcfg.val_frac, tcfg.seed);
  if (split.train.empty()) {
    throw DataError("train: no training windows after a " + std::to_string(tcfg.val_frac) + " validation split of " +
                    std::to_string(pairs.count));
  }
  std::vector<std::size_t> test_idx;
  if (opts.test) {
    test_idx.resize(opts.test->count);
    std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
  }

  RunLog log;
  log.kind = to_string(model.variant());
  log.seed = tcfg.seed;
  log.config = {{"model", model.config().to_json()}, {"train", tcfg.to_json()}};
  log.train_indices = split.train;
  log.val_indices = split.val;

  const std::size_t batches = (split.train.size() + tcfg.batch_size - 1) / tcfg.batch_size;
  const std::size_t total = batches * tcfg.epochs;
  const auto params = raw(model);
  AdamState adam;
  std::size_t step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(Rng::derive(tcfg.seed, 0x10000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t lo = b * tcfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + tcfg.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      std::map<const Parameter*, Tensor> grads;
      double batch_loss = 0.0;
      // One tape per item keeps peak memory at a single window's graph;
      // gradients are summed in item order.
      for (std::size_t i = lo; i < hi; ++i) {
        Tape tape;
        Rng drop(Rng::derive(Rng::derive(tcfg.seed, step), i - lo));
        ForwardContext ctx{&tape, &drop, true};
        Var pred = model.forward(constant(window_tensor(pairs, order[i])), ctx);
        Var loss = ops::scale(ops::mse_loss(pred, constant(target_tensor(pairs, order[i]))), inv);
        batch_loss += loss.value()[0];
        auto g = tape.backward(loss);
        for (auto& [p, t] : g.parameters()) {
          auto it = grads.find(p);
          if (it == grads.end()) {
            grads.emplace(p, t);
          } else {
            kernels::active().axpy(1.0, t.ptr(), it->second.ptr(), t.size());
          }
        }
      }
      const double lr = one_cycle_lr(step, total, tcfg);
      adam_step(params, grads, adam, lr, tcfg.weight_decay);
      rec.lr.push_back(lr);
      loss_sum += batch_loss;
    }
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_mse = evaluate(model, pairs, split.train);
    if (!split.val.empty()) rec.val_mse = evaluate(model, pairs, split.val);
    if (opts.test) rec.test_mse = evaluate(model, *opts.test, test_idx);
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const double score = rec.val_mse.value_or(rec.train_mse);
    if (score < best) {
      best = score;
      if (!opts.best_checkpoint.empty()) save_checkpoint(model, opts.best_checkpoint);
    }
    log::debug("epoch " + std::to_string(epoch) + " train_mse " + std::to_string(rec.train_mse));
    if (opts.on_epoch) opts.on_epoch(rec);
    log.epochs.push_back(std::move(rec));
  }
  if (!opts.final_checkpoint.empty()) save_checkpoint(model, opts.final_checkpoint);
  return log;
}

RunLog train_variant(const WindowedPairs& pairs, const ModelConfig& mcfg, Variant variant, const TrainConfig& tcfg,
                     const TrainOptions& opts) {
  SttModel model(mcfg, variant, tcfg.seed);
  return train(pairs, model, tcfg, opts);
}

std::vector<RunLog> run_ablation(const WindowedPairs& pairs, const ModelConfig& mcfg, std::span<const Variant> kinds,
                                 const TrainConfig& tcfg, const std::function<TrainOptions(Variant)>& options) {
  if (kinds.empty()) throw ConfigError("run_ablation: no variants requested");
  std::vector<RunLog> logs;
  for (Variant v : kinds) logs.push_back(train_variant(pairs, mcfg, v, tcfg, options ? options(v) : TrainOptions{}));
  return logs;
}

std::vector<AblationRow> ablation_table(std::span<const RunLog> logs) {
  std::vector<AblationRow> rows;
  for (const auto& log : logs) {
    if (log.epochs.empty()) continue;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.kind == log.kind; });
    if (it == rows.end()) {
      rows.push_back({log.kind, {}, 0.0});
      it = rows.end() - 1;
    }
    it->final_train_mse.push_back(log.epochs.back().train_mse);
  }
  for (auto& r : rows) {
    auto v = r.final_train_mse;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    r.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "kind  runs  median_final_train_mse  per_seed\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-4s  %4zu  %22.6e  ", r.kind.c_str(), r.final_train_mse.size(), r.median);
    out << buf;
    for (std::size_t i = 0; i < r.final_train_mse.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.6e", i ? "," : "", r.final_train_mse[i]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace rsyn
