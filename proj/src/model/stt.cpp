#include <cmath>

#include "rsyn/error.hpp"
#include "rsyn/model.hpp"

namespace rsyn {

namespace {

constexpr double kInitStd = 0.02;

Var use(const Parameter* p, ForwardContext& ctx) {
  return ctx.tape ? ctx.tape->param(*p) : constant(p->value);
}

Var drop(const Var& x, double p, ForwardContext& ctx) {
  if (!ctx.training || p == 0.0) return x;
  if (!ctx.rng) throw ContractError("training-mode forward needs an Rng");
  return ops::dropout(x, p, *ctx.rng, true);
}

Var norm(const SttModel::Norm& n, const Var& x, ForwardContext& ctx) {
  return ops::layer_norm(x, use(n.gamma, ctx), use(n.beta, ctx));
}

// queries [B, Lq, d], keys/values [B, Lk, d] -> [B, Lq, d]
Var attention(const SttModel::Attention& a, const Var& q_in, const Var& kv_in, ForwardContext& ctx,
              std::vector<Tensor>* probs) {
  const std::size_t B = q_in.dim(0), Lq = q_in.dim(1), Lk = kv_in.dim(1), d = q_in.dim(2);
  const std::size_t H = a.heads, dh = d / H;
  auto split = [&](const Var& x, std::size_t L) {
    return ops::permute(ops::reshape(x, {B, L, H, dh}), {0, 2, 1, 3});
  };
  Var q = split(ops::matmul(q_in, use(a.wq, ctx)), Lq);
  Var k = split(ops::matmul(kv_in, use(a.wk, ctx)), Lk);
  Var v = split(ops::matmul(kv_in, use(a.wv, ctx)), Lk);
  Var scores = ops::scale(ops::matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var p = ops::softmax_lastdim(scores);
  if (probs) probs->push_back(p.value());
  Var o = ops::reshape(ops::permute(ops::matmul(p, v), {0, 2, 1, 3}), {B, Lq, d});
  return ops::matmul(o, use(a.wo, ctx));
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::spatial:
      return "S";
    case Variant::temporal:
      return "T";
    case Variant::spatiotemporal:
      return "S+T";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "s" || text == "S") return Variant::spatial;
  if (text == "t" || text == "T") return Variant::temporal;
  if (text == "st" || text == "S+T" || text == "s+t" || text == "S_plus_T" || text == "ST") {
    return Variant::spatiotemporal;
  }
  throw ConfigError("unknown model variant '" + std::string(text) + "' (expected s, t or st)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(d_s, "d_s");
  positive(d_t, "d_t");
  positive(d_f, "d_f");
  positive(heads_s, "H_s");
  positive(heads_t, "H_t");
  positive(heads_c, "H_c");
  positive(layers_s, "L_s");
  positive(layers_t, "L_t");
  positive(markers, "M");
  positive(dims, "D");
  positive(window, "W");
  if (d_s % heads_s) throw ConfigError("d_s must be divisible by H_s");
  if (d_t % heads_t) throw ConfigError("d_t must be divisible by H_t");
  if (d_t % heads_c) throw ConfigError("d_t must be divisible by H_c");
  if (d_out != 1) throw ConfigError("d_out must be 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout p must be in [0,1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_s", d_s},         {"d_t", d_t},           {"d_f", d_f},           {"H_s", heads_s},
          {"H_t", heads_t},     {"H_c", heads_c},       {"L_s", layers_s},      {"L_t", layers_t},
          {"dropout", dropout}, {"d_out", d_out},       {"M", markers},         {"D", dims},
          {"W", window}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    get("d_s", c.d_s);
    get("d_t", c.d_t);
    get("d_f", c.d_f);
    get("H_s", c.heads_s);
    get("H_t", c.heads_t);
    get("H_c", c.heads_c);
    get("L_s", c.layers_s);
    get("L_t", c.layers_t);
    get("dropout", c.dropout);
    get("d_out", c.d_out);
    get("M", c.markers);
    get("D", c.dims);
    get("W", c.window);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Parameter* SttModel::add(std::string name, Shape shape, double stddev, double fill, Rng& rng) {
  Tensor t(std::move(shape), fill);
  if (stddev > 0.0) {
    for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  }
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(t)}));
  return params_.back().get();
}

SttModel::Norm SttModel::add_norm(const std::string& prefix, std::size_t d, Rng& rng) {
  return {add(prefix + ".gamma", {d}, 0.0, 1.0, rng), add(prefix + ".beta", {d}, 0.0, 0.0, rng)};
}

SttModel::Attention SttModel::add_attention(const std::string& prefix, std::size_t d, std::size_t heads, Rng& rng) {
  // Per-head W_h^{Q,K,V} (d x d/H) are stored side by side as one d x d matrix.
  return {add(prefix + ".wq", {d, d}, kInitStd, 0.0, rng), add(prefix + ".wk", {d, d}, kInitStd, 0.0, rng),
          add(prefix + ".wv", {d, d}, kInitStd, 0.0, rng), add(prefix + ".wo", {d, d}, kInitStd, 0.0, rng), heads};
}

SttModel::EncoderLayer SttModel::add_layer(const std::string& prefix, std::size_t d, std::size_t heads, Rng& rng) {
  EncoderLayer l;
  l.ln1 = add_norm(prefix + ".ln1", d, rng);
  l.attn = add_attention(prefix + ".attn", d, heads, rng);
  l.ln2 = add_norm(prefix + ".ln2", d, rng);
  l.w1 = add(prefix + ".ffn.w1", {d, d}, kInitStd, 0.0, rng);
  l.b1 = add(prefix + ".ffn.b1", {d}, 0.0, 0.0, rng);
  l.w2 = add(prefix + ".ffn.w2", {d, d}, kInitStd, 0.0, rng);
  l.b2 = add(prefix + ".ffn.b2", {d}, 0.0, 0.0, rng);
  return l;
}

SttModel::SttModel(const ModelConfig& cfg, Variant variant, std::uint64_t seed) : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  Rng rng(seed);
  const auto& c = cfg_;
  const bool has_spatial = variant != Variant::temporal;
  const bool has_temporal = variant != Variant::spatial;

  if (has_spatial) {
    spatial_embed_w_ = add("spatial.embed.weight", {c.dims, c.d_s}, kInitStd, 0.0, rng);
    spatial_embed_b_ = add("spatial.embed.bias", {c.d_s}, 0.0, 0.0, rng);
    marker_pos_ = add("spatial.marker_pos", {c.markers, c.d_s}, kInitStd, 0.0, rng);
    for (std::size_t l = 0; l < c.layers_s; ++l) {
      spatial_layers_.push_back(add_layer("spatial.layers." + std::to_string(l), c.d_s, c.heads_s, rng));
    }
  } else {
    // Raw markers D -> d_s, no marker positional table and no spatial layers.
    spatial_embed_w_ = add("temporal.marker_embed.weight", {c.dims, c.d_s}, kInitStd, 0.0, rng);
    spatial_embed_b_ = add("temporal.marker_embed.bias", {c.d_s}, 0.0, 0.0, rng);
  }

  if (has_temporal) {
    temporal_embed_w_ = add("temporal.embed.weight", {c.d_s, c.d_t}, kInitStd, 0.0, rng);
    temporal_embed_b_ = add("temporal.embed.bias", {c.d_t}, 0.0, 0.0, rng);
    frame_pos_ = add("temporal.frame_pos", {c.window, c.d_t}, kInitStd, 0.0, rng);
    for (std::size_t l = 0; l < c.layers_t; ++l) {
      temporal_layers_.push_back(add_layer("temporal.layers." + std::to_string(l), c.d_t, c.heads_t, rng));
    }
  }

  if (variant == Variant::spatiotemporal) {
    kv_w_ = add("fusion.kv.weight", {c.d_s, c.d_t}, kInitStd, 0.0, rng);
    kv_b_ = add("fusion.kv.bias", {c.d_t}, 0.0, 0.0, rng);
    kv_norm_ = add_norm("fusion.kv_ln", c.d_t, rng);
    cross_ = add_attention("fusion.attn", c.d_t, c.heads_c, rng);
    fuse_norm_ = add_norm("fusion.ln", c.d_t, rng);
  } else if (variant == Variant::spatial) {
    proj_w_ = add("spatial.proj.weight", {c.d_s, c.d_t}, kInitStd, 0.0, rng);
    proj_b_ = add("spatial.proj.bias", {c.d_t}, 0.0, 0.0, rng);
  }

  head_w1_ = add("head.fc1.weight", {c.markers * c.d_t, c.d_f}, kInitStd, 0.0, rng);
  head_b1_ = add("head.fc1.bias", {c.d_f}, 0.0, 0.0, rng);
  head_w2_ = add("head.fc2.weight", {c.d_f, c.d_out}, kInitStd, 0.0, rng);
  head_b2_ = add("head.fc2.bias", {c.d_out}, 0.0, 0.0, rng);
}

Parameter* SttModel::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::size_t SttModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

Var SttModel::encoder(const std::vector<EncoderLayer>& layers, Var x, ForwardContext& ctx,
                      std::vector<Tensor>* probs) const {
  const double p = cfg_.dropout;
  for (const auto& l : layers) {
    Var u = norm(l.ln1, x, ctx);
    Var v = attention(l.attn, u, u, ctx, probs);
    Var xh = ops::add(x, drop(v, p, ctx));
    Var r = norm(l.ln2, xh, ctx);
    Var h = ops::relu(ops::add(ops::matmul(r, use(l.w1, ctx)), use(l.b1, ctx)));
    Var f = ops::add(ops::matmul(h, use(l.w2, ctx)), use(l.b2, ctx));
    x = ops::add(xh, drop(f, p, ctx));
  }
  return x;
}

Var SttModel::spatial_block(const Var& window, ForwardContext& ctx, AttentionTrace* trace) const {
  if (variant_ == Variant::temporal) throw ConfigError("temporal-only model has no spatial block");
  const Shape expect{cfg_.window, cfg_.markers, cfg_.dims};
  if (window.shape() != expect) {
    throw ConfigError("input window " + to_string(window.shape()) + " does not match model geometry " + to_string(expect));
  }
  Var x = ops::add(ops::matmul(window, use(spatial_embed_w_, ctx)), use(spatial_embed_b_, ctx));
  x = ops::add(x, use(marker_pos_, ctx));  // [W, M, d_s] + [M, d_s]
  return encoder(spatial_layers_, x, ctx, trace ? &trace->spatial : nullptr);
}

Var SttModel::temporal_stack(Var per_marker, ForwardContext& ctx, AttentionTrace* trace) const {
  // per_marker: [M, W, d_s]
  Var x = ops::add(ops::matmul(per_marker, use(temporal_embed_w_, ctx)), use(temporal_embed_b_, ctx));
  x = ops::add(x, use(frame_pos_, ctx));  // + [W, d_t]
  return encoder(temporal_layers_, x, ctx, trace ? &trace->temporal : nullptr);
}

Var SttModel::temporal_block(const Var& spatial, ForwardContext& ctx, AttentionTrace* trace) const {
  if (variant_ == Variant::spatial) throw ConfigError("spatial-only model has no temporal block");
  const Shape expect{cfg_.window, cfg_.markers, cfg_.d_s};
  if (spatial.shape() != expect) {
    throw ConfigError("temporal block input " + to_string(spatial.shape()) + " expected " + to_string(expect));
  }
  return temporal_stack(ops::permute(spatial, {1, 0, 2}), ctx, trace);
}

Var SttModel::fuse(const Var& spatial, const Var& temporal, ForwardContext& ctx, AttentionTrace* trace) const {
  if (variant_ != Variant::spatiotemporal) throw ConfigError("only the S+T model has a fusion stage");
  Var kv = norm(kv_norm_, ops::add(ops::matmul(spatial, use(kv_w_, ctx)), use(kv_b_, ctx)), ctx);  // [W,M,d_t]
  Var queries = ops::permute(temporal, {1, 0, 2});                                                  // [W,M,d_t]
  std::vector<Tensor> probs;
  Var c = attention(cross_, queries, kv, ctx, trace ? &probs : nullptr);
  if (trace) trace->cross = std::move(probs.front());
  return norm(fuse_norm_, ops::add(queries, drop(c, cfg_.dropout, ctx)), ctx);
}

Var SttModel::head(const Var& fused, ForwardContext& ctx) const {
  const std::size_t W = cfg_.window, width = cfg_.markers * cfg_.d_t;
  Var flat = ops::reshape(fused, {W, width});
  Var z = ops::relu(ops::add(ops::matmul(flat, use(head_w1_, ctx)), use(head_b1_, ctx)));
  Var s = ops::add(ops::matmul(z, use(head_w2_, ctx)), use(head_b2_, ctx));  // [W, 1]
  return ops::softplus(ops::reshape(s, {W}));
}

Var SttModel::forward(const Var& window, ForwardContext& ctx, AttentionTrace* trace) const {
  switch (variant_) {
    case Variant::spatiotemporal: {
      Var a = spatial_block(window, ctx, trace);
      Var b = temporal_block(a, ctx, trace);
      return head(fuse(a, b, ctx, trace), ctx);
    }
    case Variant::spatial: {
      Var a = spatial_block(window, ctx, trace);
      return head(ops::add(ops::matmul(a, use(proj_w_, ctx)), use(proj_b_, ctx)), ctx);
    }
    case Variant::temporal: {
      const Shape expect{cfg_.window, cfg_.markers, cfg_.dims};
      if (window.shape() != expect) {
        throw ConfigError("input window " + to_string(window.shape()) + " does not match model geometry " +
                          to_string(expect));
      }
      Var e = ops::add(ops::matmul(window, use(spatial_embed_w_, ctx)), use(spatial_embed_b_, ctx));
      Var b = temporal_stack(ops::permute(e, {1, 0, 2}), ctx, trace);
      return head(ops::permute(b, {1, 0, 2}), ctx);
    }
  }
  throw ConfigError("unknown variant");
}

std::vector<double> SttModel::predict(std::span<const double> window) const {
  const Shape shape{cfg_.window, cfg_.markers, cfg_.dims};
  if (window.size() != numel(shape)) {
    throw ConfigError("window has " + std::to_string(window.size()) + " values, model expects " + to_string(shape));
  }
  ForwardContext ctx;
  Var out = forward(constant(Tensor(shape, std::vector<double>(window.begin(), window.end()))), ctx);
  return out.value().vec();
}

}  // namespace rsyn
