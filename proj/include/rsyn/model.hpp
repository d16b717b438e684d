#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rsyn/autograd.hpp"

namespace rsyn {

// Which blocks the network keeps. S+T is the full spatiotemporal model.
enum class Variant { spatial, temporal, spatiotemporal };

std::string to_string(Variant v);  // "S", "T", "S+T"
// Accepts s|t|st, S|T|S+T and S_plus_T. Throws ConfigError otherwise.
Variant parse_variant(std::string_view text);

struct ModelConfig {
  std::size_t d_s = 64;   // spatial width
  std::size_t d_t = 128;  // temporal width
  std::size_t d_f = 256;  // head hidden width
  std::size_t heads_s = 2;
  std::size_t heads_t = 4;
  std::size_t heads_c = 4;  // cross-attention heads
  std::size_t layers_s = 2;
  std::size_t layers_t = 4;
  double dropout = 0.3;
  std::size_t d_out = 1;
  std::size_t markers = 53;  // M
  std::size_t dims = 3;      // D
  std::size_t window = 256;  // W

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Per-call forward state. Without a tape, parameters enter as constants and
// nothing is recorded.
struct ForwardContext {
  Tape* tape = nullptr;
  Rng* rng = nullptr;
  bool training = false;
};

// Attention probabilities captured during a forward pass (for inspection).
struct AttentionTrace {
  std::vector<Tensor> spatial;   // per layer, [W, H_s, M, M]
  std::vector<Tensor> temporal;  // per layer, [M, H_t, W, W]
  Tensor cross;                  // [W, H_c, M, M]
};

class SttModel {
 public:
  SttModel(const ModelConfig& cfg, Variant variant, std::uint64_t seed);
  SttModel(const SttModel&) = delete;
  SttModel& operator=(const SttModel&) = delete;
  SttModel(SttModel&&) = default;
  SttModel& operator=(SttModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }

  // Registration order; stable across runs for a given (config, variant).
  const std::vector<std::unique_ptr<Parameter>>& parameters() const { return params_; }
  Parameter* find(std::string_view name) const;
  std::size_t parameter_count() const;

  // window: [W, M, D] -> [W] nonnegative spectrum.
  Var forward(const Var& window, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;

  // The stages of the S+T path, exposed for testing.
  Var spatial_block(const Var& window, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;
  Var temporal_block(const Var& spatial, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;
  Var fuse(const Var& spatial, const Var& temporal, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;
  Var head(const Var& fused, ForwardContext& ctx) const;

  // Eval-mode prediction for one flattened window of W*M*D values.
  std::vector<double> predict(std::span<const double> window) const;

  struct Norm {
    Parameter* gamma;
    Parameter* beta;
  };
  struct Attention {
    Parameter* wq;
    Parameter* wk;
    Parameter* wv;
    Parameter* wo;
    std::size_t heads;
  };
  struct EncoderLayer {
    Norm ln1;
    Attention attn;
    Norm ln2;
    Parameter* w1;
    Parameter* b1;
    Parameter* w2;
    Parameter* b2;
  };

  const std::vector<EncoderLayer>& spatial_layers() const { return spatial_layers_; }
  const std::vector<EncoderLayer>& temporal_layers() const { return temporal_layers_; }

 private:
  Parameter* add(std::string name, Shape shape, double stddev, double fill, Rng& rng);
  Norm add_norm(const std::string& prefix, std::size_t d, Rng& rng);
  Attention add_attention(const std::string& prefix, std::size_t d, std::size_t heads, Rng& rng);
  EncoderLayer add_layer(const std::string& prefix, std::size_t d, std::size_t heads, Rng& rng);

  Var encoder(const std::vector<EncoderLayer>& layers, Var x, ForwardContext& ctx, std::vector<Tensor>* probs) const;
  Var temporal_stack(Var per_marker, ForwardContext& ctx, AttentionTrace* trace) const;

  ModelConfig cfg_;
  Variant variant_;
  std::vector<std::unique_ptr<Parameter>> params_;

  Parameter* spatial_embed_w_ = nullptr;
  Parameter* spatial_embed_b_ = nullptr;
  Parameter* marker_pos_ = nullptr;
  std::vector<EncoderLayer> spatial_layers_;

  Parameter* temporal_embed_w_ = nullptr;
  Parameter* temporal_embed_b_ = nullptr;
  Parameter* frame_pos_ = nullptr;
  std::vector<EncoderLayer> temporal_layers_;

  Parameter* kv_w_ = nullptr;
  Parameter* kv_b_ = nullptr;
  Norm kv_norm_{};
  Attention cross_{};
  Norm fuse_norm_{};

  Parameter* proj_w_ = nullptr;  // S variant: d_s -> d_t per marker
  Parameter* proj_b_ = nullptr;

  Parameter* head_w1_ = nullptr;
  Parameter* head_b1_ = nullptr;
  Parameter* head_w2_ = nullptr;
  Parameter* head_b2_ = nullptr;
};

}  // namespace rsyn
