#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsyn/dsp.hpp"
#include "rsyn/model.hpp"

namespace rsyn {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double eta0 = 3e-4;  // peak learning rate
  double lr_start = 3e-7;
  double lr_end = 3e-10;
  double warmup_frac = 0.10;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  double val_frac = 0.10;

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<const Parameter*, Tensor> m;
  std::map<const Parameter*, Tensor> v;
};

// (1/n) sum (pred - target)^2. Throws ContractError on a length mismatch.
double mse_loss(std::span<const double> pred, std::span<const double> target);

// Learning rate at optimizer step `step` of `total`. Linear from lr_start to
// eta0 over the first ceil(warmup_frac * total) steps, then linear to lr_end
// at the last step. Throws ContractError when step >= total.
double one_cycle_lr(std::size_t step, std::size_t total, const TrainConfig& cfg);
// Number of warmup steps for a run of `total` steps.
std::size_t warmup_steps(std::size_t total, const TrainConfig& cfg);

// One bias-corrected Adam update. The L2 term weight_decay * theta is added to
// each gradient. Parameters absent from `grads` get a zero gradient.
void adam_step(std::span<Parameter* const> params, const std::map<const Parameter*, Tensor>& grads, AdamState& state,
               double lr, double weight_decay);

struct EpochRecord {
  std::size_t epoch = 0;          // 1-based
  double train_mse = 0.0;         // eval mode, end of epoch
  double train_loss = 0.0;        // mean batch loss seen by the optimizer
  std::optional<double> val_mse;  // eval mode
  std::optional<double> test_mse;
  std::vector<double> lr;         // one entry per optimizer step this epoch
  double wall_s = 0.0;            // not serialized
};

struct RunLog {
  std::string kind;  // variant tag: S, T or S+T
  std::uint64_t seed = 0;
  nlohmann::json config;  // {"model": ..., "train": ...}
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<EpochRecord> epochs;

  std::vector<double> lr_trace() const;
  std::size_t total_steps() const;

  // Line-delimited JSON: one header record, then one record per epoch.
  // Wall-clock time is left out so identical runs give identical files.
  std::string serialize() const;
  static RunLog parse(const std::string& text);
  void save(const std::string& path) const;
  static RunLog load(const std::string& path);
  // A file may hold several logs back to back (ablation); split on headers.
  static std::vector<RunLog> load_all(const std::string& path);
};

struct TrainOptions {
  std::string final_checkpoint;  // written after the last epoch when non-empty
  std::string best_checkpoint;   // lowest val MSE (train MSE without a val split)
  const WindowedPairs* test = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Index split: val_frac of the windows, chosen by a seeded shuffle.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_indices(std::size_t count, double val_frac, std::uint64_t seed);

// Eval-mode MSE averaged over the listed windows.
double evaluate(const SttModel& model, const WindowedPairs& pairs, std::span<const std::size_t> indices);

// Trains in place. Deterministic for a given seed; no early stopping.
RunLog train(const WindowedPairs& pairs, SttModel& model, const TrainConfig& tcfg, const TrainOptions& opts = {});

// Builds SttModel(mcfg, variant, tcfg.seed) and trains it.
RunLog train_variant(const WindowedPairs& pairs, const ModelConfig& mcfg, Variant variant, const TrainConfig& tcfg,
                     const TrainOptions& opts = {});

// Same data, split, order and seed for every kind.
std::vector<RunLog> run_ablation(const WindowedPairs& pairs, const ModelConfig& mcfg, std::span<const Variant> kinds,
                                 const TrainConfig& tcfg,
                                 const std::function<TrainOptions(Variant)>& options = nullptr);

struct AblationRow {
  std::string kind;
  std::vector<double> final_train_mse;  // one per seed
  double median = 0.0;
};
// Median final train MSE per kind, in first-appearance order.
std::vector<AblationRow> ablation_table(std::span<const RunLog> logs);
std::string format_ablation_table(std::span<const AblationRow> rows);

// Checks the model's M, D and W against the pairs. Throws ConfigError listing
// expected and actual values.
void check_compatible(const ModelConfig& cfg, const WindowedPairs& pairs);

}  // namespace rsyn
