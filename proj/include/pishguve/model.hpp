#ifndef PISHGUVE_MODEL_HPP
#define PISHGUVE_MODEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pishguve/dataio.hpp"
#include "pishguve/errors.hpp"
#include "pishguve/tensor.hpp"

namespace pv {

struct ModelConfig {
  std::size_t t_in = 15;    // observed steps
  std::size_t horizon = 25; // predicted steps
  std::size_t latent_dim = 160;
  std::size_t node_mlp_hidden = 160;
  std::size_t lad_linear_dim = 160;
  std::size_t channel_attn_reduction = 8;
  std::size_t spatial_attn_kernel = 3;
  std::array<std::size_t, 3> cnn_channels = {64, 32, 16};
  double leaky_slope = 0.01;
  double p_attn = 0.25;
  double p_lin = 0.02;
  bool include_self_in_neighbors = false;

  std::size_t feature_len() const { return latent_dim + 2 * t_in; }

  void validate() const {
    if (t_in < 2) throw ConfigError("model: t_in must be >= 2");
    if (horizon < 1) throw ConfigError("model: horizon must be >= 1");
    if (latent_dim < 1 || node_mlp_hidden < 1 || lad_linear_dim < 1 ||
        channel_attn_reduction < 1 || cnn_channels[0] < 1 || cnn_channels[1] < 1 ||
        cnn_channels[2] < 1)
      throw ConfigError("model: all dims must be >= 1");
    if (lad_linear_dim != latent_dim)
      throw ConfigError("model: lad_linear_dim must equal latent_dim (GIN sums both branches)");
    if (!(p_attn >= 0 && p_attn < 1 && p_lin >= 0 && p_lin < 1))
      throw ConfigError("model: dropout probabilities must be in [0,1)");
    if (!(leaky_slope > 0 && leaky_slope < 1))
      throw ConfigError("model: leaky_slope must be in (0,1)");
    if (spatial_attn_kernel % 2 == 0) throw ConfigError("model: spatial kernel must be odd");
    if (feature_len() < 4)
      throw ConfigError("model: latent_dim + 2*t_in must be >= 4 for the conv stack");
  }

  /// Desk-scale configuration for gradient checking.
  static ModelConfig tiny() {
    ModelConfig c;
    c.t_in = 3;
    c.horizon = 2;
    c.latent_dim = 4;
    c.node_mlp_hidden = 4;
    c.lad_linear_dim = 4;
    c.cnn_channels = {4, 3, 2};
    return c;
  }
};

/// Shared-MLP channel gate plus convolved spatial gate (one attention block).
struct AttentionParams {
  Tensor ca_w1, ca_b1, ca_w2, ca_b2;  // shared MLP, hidden C/r (clamped to 1)
  Tensor sa_kernel, sa_bias;          // conv over stacked avg/max maps
};

struct LadParams {
  Tensor w4, b4;
  AttentionParams attn;
};

struct HeadConv {
  Tensor kernel, bias;
  AttentionParams attn;
};

struct ModelParams {
  Tensor embed_w, embed_b;                      // input embedding
  Tensor node_w2, node_b2, node_w3, node_b3, theta;  // node aggregation branch
  LadParams lad1, lad2;                         // stacked neighbor blocks
  HeadConv conv1, conv2, conv3;                 // attentive CNN head
  Tensor out_kernel, out_bias;                  // final 1x1 conv

  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> v;
    v.emplace_back("embed.w", &embed_w);
    v.emplace_back("embed.b", &embed_b);
    v.emplace_back("node.w2", &node_w2);
    v.emplace_back("node.b2", &node_b2);
    v.emplace_back("node.w3", &node_w3);
    v.emplace_back("node.b3", &node_b3);
    v.emplace_back("node.theta", &theta);
    auto add_attn = [&v](const std::string& p, AttentionParams& a) {
      v.emplace_back(p + ".ca_w1", &a.ca_w1);
      v.emplace_back(p + ".ca_b1", &a.ca_b1);
      v.emplace_back(p + ".ca_w2", &a.ca_w2);
      v.emplace_back(p + ".ca_b2", &a.ca_b2);
      v.emplace_back(p + ".sa_kernel", &a.sa_kernel);
      v.emplace_back(p + ".sa_bias", &a.sa_bias);
    };
    auto add_lad = [&](const std::string& p, LadParams& l) {
      v.emplace_back(p + ".w4", &l.w4);
      v.emplace_back(p + ".b4", &l.b4);
      add_attn(p + ".attn", l.attn);
    };
    add_lad("lad1", lad1);
    add_lad("lad2", lad2);
    auto add_conv = [&](const std::string& p, HeadConv& c) {
      v.emplace_back(p + ".kernel", &c.kernel);
      v.emplace_back(p + ".bias", &c.bias);
      add_attn(p + ".attn", c.attn);
    };
    add_conv("head.conv1", conv1);
    add_conv("head.conv2", conv2);
    add_conv("head.conv3", conv3);
    v.emplace_back("head.out_kernel", &out_kernel);
    v.emplace_back("head.out_bias", &out_bias);
    return v;
  }

  /// Fresh leaf tensors holding copies of the current values.
  ModelParams deep_copy() {
    ModelParams c = *this;
    for (auto [mine, theirs] : zip_named(c))
      *theirs = Tensor::from_data(mine->shape(), mine->data(), mine->requires_grad());
    return c;
  }

 private:
  std::vector<std::pair<Tensor*, Tensor*>> zip_named(ModelParams& other) {
    auto a = named();
    auto b = other.named();
    std::vector<std::pair<Tensor*, Tensor*>> z;
    for (std::size_t i = 0; i < a.size(); ++i) z.emplace_back(a[i].second, b[i].second);
    return z;
  }
};

namespace detail {

inline std::size_t attn_hidden(std::size_t channels, std::size_t reduction) {
  return std::max<std::size_t>(1, channels / reduction);
}

struct ParamShape {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 for biases/theta (zero-initialized)
};

inline std::vector<ParamShape> param_shapes(const ModelConfig& c) {
  std::vector<ParamShape> v;
  const std::size_t d = c.latent_dim, hid = c.node_mlp_hidden, ld = c.lad_linear_dim;
  const std::size_t k = c.spatial_attn_kernel;
  const auto [c1, c2, c3] = c.cnn_channels;
  v.push_back({"embed.w", {4 * c.t_in, d}, 4 * c.t_in});
  v.push_back({"embed.b", {d}, 0});
  v.push_back({"node.w2", {d, hid}, d});
  v.push_back({"node.b2", {hid}, 0});
  v.push_back({"node.w3", {hid, d}, hid});
  v.push_back({"node.b3", {d}, 0});
  v.push_back({"node.theta", {1}, 0});
  auto attn = [&](const std::string& p, std::size_t ch) {
    std::size_t h = attn_hidden(ch, c.channel_attn_reduction);
    v.push_back({p + ".ca_w1", {ch, h}, ch});
    v.push_back({p + ".ca_b1", {h}, 0});
    v.push_back({p + ".ca_w2", {h, ch}, h});
    v.push_back({p + ".ca_b2", {ch}, 0});
    v.push_back({p + ".sa_kernel", {1, 2, k, k}, 2 * k * k});
    v.push_back({p + ".sa_bias", {1}, 0});
  };
  for (const char* p : {"lad1", "lad2"}) {
    v.push_back({std::string(p) + ".w4", {d, ld}, d});
    v.push_back({std::string(p) + ".b4", {ld}, 0});
    attn(std::string(p) + ".attn", ld);
  }
  v.push_back({"head.conv1.kernel", {c1, 1, 2, 2}, 1 * 2 * 2});
  v.push_back({"head.conv1.bias", {c1}, 0});
  attn("head.conv1.attn", c1);
  v.push_back({"head.conv2.kernel", {c2, c1, 2, 1}, c1 * 2});
  v.push_back({"head.conv2.bias", {c2}, 0});
  attn("head.conv2.attn", c2);
  v.push_back({"head.conv3.kernel", {c3, c2, 2, 1}, c2 * 2});
  v.push_back({"head.conv3.bias", {c3}, 0});
  attn("head.conv3.attn", c3);
  v.push_back({"head.out_kernel", {2 * c.horizon, c3, 1, 1}, c3});
  v.push_back({"head.out_bias", {2 * c.horizon}, 0});
  return v;
}

}  // namespace detail

/// Exact count of learnable scalars for a configuration.
inline std::size_t count_params(const ModelConfig& c) {
  c.validate();
  std::size_t total = 0;
  for (const auto& p : detail::param_shapes(c)) total += numel(p.shape);
  return total;
}

/// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases and theta
/// zero. Deterministic: parameters are filled in the fixed named() order from
/// the given stream.
inline ModelParams init_params(const ModelConfig& cfg, RngStream rng) {
  cfg.validate();
  ModelParams p;
  auto shapes = detail::param_shapes(cfg);
  auto named = p.named();
  if (shapes.size() != named.size()) throw ContractError("init_params: manifest mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].name != named[i].first) throw ContractError("init_params: name order mismatch");
    std::vector<double> data(numel(shapes[i].shape), 0.0);
    if (shapes[i].fan_in > 0) {
      double bound = 1.0 / std::sqrt(static_cast<double>(shapes[i].fan_in));
      for (double& v : data) v = rng.uniform(-bound, bound);
    }
    *named[i].second = Tensor::from_data(shapes[i].shape, std::move(data), /*requires_grad=*/true);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Network stages.

/// Per-vehicle embedding: flatten(V_i) || flatten(dV_i) -> affine -> leaky
/// ReLU. Returns n x D.
inline Tensor embed(const SceneBatchInput& batch, const ModelParams& p, const ModelConfig& cfg) {
  if (batch.n == 0) throw DataError("embed: empty scene");
  if (batch.V.size() != batch.n * batch.t_in * 2 || batch.dV.size() != batch.V.size())
    throw ShapeError("embed: batch arrays inconsistent with n and t_in");
  if (batch.t_in != cfg.t_in) throw ShapeError("embed: batch t_in does not match config");
  const std::size_t w = 2 * cfg.t_in;
  std::vector<double> x(batch.n * 4 * cfg.t_in);
  for (std::size_t i = 0; i < batch.n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      x[i * 2 * w + j] = batch.V[i * w + j];
      x[i * 2 * w + w + j] = batch.dV[i * w + j];
    }
  }
  Tensor in = Tensor::from_data({batch.n, 2 * w}, std::move(x));
  return leaky_relu(affine(in, p.embed_w, p.embed_b), cfg.leaky_slope);
}

/// Node aggregation: W3.(W2.(1+theta).N + B2) + B3, two pure affine maps.
inline Tensor node_branch(const Tensor& n, const ModelParams& p) {
  Tensor scaled = mul(n, add(Tensor::scalar(1.0), p.theta));
  return affine(affine(scaled, p.node_w2, p.node_b2), p.node_w3, p.node_b3);
}

/// Channel gate: sigmoid(MLP(avgpool) + MLP(maxpool)) scales each channel.
/// p_drop applies inverted dropout to the scaled output in train mode.
inline Tensor channel_attention(const Tensor& f, const AttentionParams& a, const ModelConfig& cfg,
                                double p_drop, Mode mode, RngStream& rng) {
  if (f.shape().size() != 3) throw ShapeError("channel_attention: expected (C,H,W)");
  const std::size_t c = f.shape()[0];
  auto mlp = [&](const Tensor& v) {
    Tensor h = leaky_relu(affine(reshape(v, {1, c}), a.ca_w1, a.ca_b1), cfg.leaky_slope);
    return affine(h, a.ca_w2, a.ca_b2);
  };
  Tensor avg = pool(f, PoolKind::avg, {1, 2});
  Tensor mx = pool(f, PoolKind::max, {1, 2});
  Tensor s = sigmoid(reshape(add(mlp(avg), mlp(mx)), {c}));
  return dropout(channel_scale(f, s), p_drop, mode, rng);
}

/// Spatial gate: sigmoid(conv([avg-over-C || max-over-C])) scales every
/// channel by a single H x W map; same padding keeps the map size.
inline Tensor spatial_attention(const Tensor& f, const AttentionParams& a, const ModelConfig& cfg,
                                double p_drop, Mode mode, RngStream& rng) {
  if (f.shape().size() != 3) throw ShapeError("spatial_attention: expected (C,H,W)");
  const std::size_t h = f.shape()[1], w = f.shape()[2];
  Tensor avg = reshape(pool(f, PoolKind::avg, {0}), {1, h, w});
  Tensor mx = reshape(pool(f, PoolKind::max, {0}), {1, h, w});
  std::size_t pad = cfg.spatial_attn_kernel / 2;
  Tensor m = sigmoid(conv2d(concat({avg, mx}, 0), a.sa_kernel, a.sa_bias, pad, pad));
  return dropout(spatial_scale(f, reshape(m, {h, w})), p_drop, mode, rng);
}

/// LAD block on n x D features: linear -> linear-dropout -> channel attention
/// -> spatial attention -> attention-dropout. Each vehicle's feature vector
/// is viewed as a D x 1 x 1 map for the attention stages.
inline Tensor lad(const Tensor& x, const LadParams& l, const ModelConfig& cfg, Mode mode,
                  RngStream& rng) {
  const std::size_t n = x.shape()[0], d = cfg.lad_linear_dim;
  Tensor y = dropout(affine(x, l.w4, l.b4), cfg.p_lin, mode, rng);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor v = reshape(slice_row(y, i), {d, 1, 1});
    v = channel_attention(v, l.attn, cfg, 0.0, mode, rng);
    v = spatial_attention(v, l.attn, cfg, 0.0, mode, rng);
    rows.push_back(reshape(v, {1, d}));
  }
  return dropout(concat(rows, 0), cfg.p_attn, mode, rng);
}

/// Attentive GIN: node branch plus the sum of stacked-LAD neighbor features.
/// Neighbor features are computed once per scene; with self-loops off, the
/// n=1 output equals the node branch exactly (empty sum).
inline Tensor gin(const Tensor& n, const ModelParams& p, const ModelConfig& cfg, Mode mode,
                  RngStream& rng) {
  const std::size_t count = n.shape()[0];
  if (count < 1) throw DataError("gin: empty scene");
  Tensor g = node_branch(n, p);
  Tensor neighbor = lad(lad(n, p.lad1, cfg, mode, rng), p.lad2, cfg, mode, rng);
  std::vector<Tensor> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor acc = slice_row(g, i);
    for (std::size_t j = 0; j < count; ++j) {
      if (j == i && !cfg.include_self_in_neighbors) continue;
      acc = add(acc, slice_row(neighbor, j));
    }
    rows.push_back(reshape(acc, {1, cfg.latent_dim}));
  }
  return concat(rows, 0);
}

namespace detail {

template <typename Fn>
Tensor stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + ": " + e.what());
  }
}

}  // namespace detail

/// Full network: embed -> gin -> per-vehicle attentive CNN head. The enriched
/// feature of each vehicle is concatenated with its flattened relative
/// coordinates, viewed as a 1 x F x 1 map widened to width 2 by column
/// duplication, passed through the 2x2 / 2x1 / 2x1 attentive conv stack,
/// globally average-pooled, and mapped by a final 1x1 conv to (horizon, 2)
/// absolute coordinates.
inline Tensor forward(const SceneBatchInput& batch, const ModelParams& p, const ModelConfig& cfg,
                      Mode mode, RngStream& rng) {
  if (batch.n == 0) throw DataError("forward: empty scene");
  Tensor n = detail::stage("embed", [&] { return embed(batch, p, cfg); });
  Tensor g = detail::stage("gin", [&] { return gin(n, p, cfg, mode, rng); });
  const std::size_t w = 2 * cfg.t_in;
  const std::size_t f_len = cfg.feature_len();
  std::vector<Tensor> rows;
  rows.reserve(batch.n);
  for (std::size_t i = 0; i < batch.n; ++i) {
    std::vector<double> dv(batch.dV.begin() + static_cast<std::ptrdiff_t>(i * w),
                           batch.dV.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
    Tensor feat = concat({slice_row(g, i), Tensor::from_data({w}, std::move(dv))}, 0);
    Tensor map = reshape(feat, {1, f_len, 1});
    Tensor x = concat({map, map}, 2);  // width 2 via column duplication
    const HeadConv* convs[] = {&p.conv1, &p.conv2, &p.conv3};
    const char* names[] = {"head.conv1", "head.conv2", "head.conv3"};
    for (std::size_t li = 0; li < 3; ++li) {
      const HeadConv& hc = *convs[li];
      x = detail::stage(names[li], [&] {
        Tensor y = conv2d(x, hc.kernel, hc.bias);
        y = channel_attention(y, hc.attn, cfg, 0.0, mode, rng);
        return spatial_attention(y, hc.attn, cfg, cfg.p_attn, mode, rng);
      });
    }
    Tensor pooled = pool(x, PoolKind::avg, {1, 2});
    Tensor out = detail::stage("head.out", [&] {
      return conv2d(reshape(pooled, {cfg.cnn_channels[2], 1, 1}), p.out_kernel, p.out_bias);
    });
    rows.push_back(reshape(out, {1, 2 * cfg.horizon}));
  }
  return reshape(concat(rows, 0), {batch.n, cfg.horizon, 2});
}

// ---------------------------------------------------------------------------
// Config and checkpoint serialization.

inline nlohmann::json config_json(const ModelConfig& c) {
  return {{"t_in", c.t_in},
          {"horizon", c.horizon},
          {"latent_dim", c.latent_dim},
          {"node_mlp_hidden", c.node_mlp_hidden},
          {"lad_linear_dim", c.lad_linear_dim},
          {"channel_attn_reduction", c.channel_attn_reduction},
          {"spatial_attn_kernel", c.spatial_attn_kernel},
          {"cnn_channels", c.cnn_channels},
          {"leaky_slope", c.leaky_slope},
          {"p_attn", c.p_attn},
          {"p_lin", c.p_lin},
          {"include_self_in_neighbors", c.include_self_in_neighbors}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  static const std::vector<std::string> known = {
      "t_in", "horizon", "latent_dim", "node_mlp_hidden", "lad_linear_dim",
      "channel_attn_reduction", "spatial_attn_kernel", "cnn_channels", "leaky_slope",
      "p_attn", "p_lin", "include_self_in_neighbors"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("model config: unknown key '" + it.key() + "'");
  if (j.contains("t_in")) c.t_in = j["t_in"].get<std::size_t>();
  if (j.contains("horizon")) c.horizon = j["horizon"].get<std::size_t>();
  if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<std::size_t>();
  if (j.contains("node_mlp_hidden")) c.node_mlp_hidden = j["node_mlp_hidden"].get<std::size_t>();
  if (j.contains("lad_linear_dim")) c.lad_linear_dim = j["lad_linear_dim"].get<std::size_t>();
  if (j.contains("channel_attn_reduction"))
    c.channel_attn_reduction = j["channel_attn_reduction"].get<std::size_t>();
  if (j.contains("spatial_attn_kernel"))
    c.spatial_attn_kernel = j["spatial_attn_kernel"].get<std::size_t>();
  if (j.contains("cnn_channels")) c.cnn_channels = j["cnn_channels"].get<std::array<std::size_t, 3>>();
  if (j.contains("leaky_slope")) c.leaky_slope = j["leaky_slope"].get<double>();
  if (j.contains("p_attn")) c.p_attn = j["p_attn"].get<double>();
  if (j.contains("p_lin")) c.p_lin = j["p_lin"].get<double>();
  if (j.contains("include_self_in_neighbors"))
    c.include_self_in_neighbors = j["include_self_in_neighbors"].get<bool>();
  c.validate();
  return c;
}

/// Versioned JSON checkpoint: parameter name -> shape + row-major values.
/// Doubles serialize via shortest-round-trip formatting, so the round trip is
/// bit-exact.
inline void save_checkpoint(ModelParams& params, const ModelConfig& cfg, std::ostream& os) {
  nlohmann::json j;
  j["format"] = "pishguve-checkpoint";
  j["version"] = 1;
  j["config"] = config_json(cfg);
  nlohmann::json ps = nlohmann::json::object();
  for (auto& [name, t] : params.named())
    ps[name] = {{"shape", t->shape()}, {"data", t->data()}};
  j["params"] = ps;
  os << j.dump() << "\n";
}

inline void save_checkpoint_file(ModelParams& params, const ModelConfig& cfg,
                                 const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  save_checkpoint(params, cfg, os);
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "pishguve-checkpoint")
    throw DataError("checkpoint: not a pishguve-checkpoint JSON document");
  if (j.value("version", 0) != 1) throw DataError("checkpoint: unsupported version");
  ModelConfig cfg = config_from_json(j.at("config"));
  ModelParams p = init_params(cfg, RngStream(0, 0));
  for (auto& [name, t] : p.named()) {
    const auto& entry = j.at("params").at(name);
    Shape shape = entry.at("shape").get<Shape>();
    if (shape != t->shape())
      throw DataError("checkpoint: shape mismatch for " + name);
    *t = Tensor::from_data(shape, entry.at("data").get<std::vector<double>>(), true);
  }
  return {std::move(p), cfg};
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace pv

#endif
