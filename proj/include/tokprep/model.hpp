#pragma once

// Pre-norm decoder-only transformer (RMSNorm, rotary attention, SiLU-gated
// FFN) with per-layer hidden-state access, mask variants and a prompt-prefix
// KV cache.
//
// Conventions: activations are row vectors and projections are applied as
// x * W, so W has shape [in x out]. Layers are numbered 1..L; the hidden
// states entering layer l carry layer index l - 1 (embeddings are layer 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprep/error.hpp"
#include "tokprep/numerics.hpp"
#include "tokprep/tokenizer.hpp"

namespace tokprep {

struct ModelConfig {
  std::size_t n_layers = 16;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t vocab_size = 2048;
  std::size_t n_reserved_pst = 4;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t embedding_rows() const { return vocab_size + n_reserved_pst; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (n_layers == 0) fail("n_layers must be >= 1");
    if (n_heads == 0 || d_model == 0) fail("n_heads and d_model must be >= 1");
    if (d_model % n_heads != 0) {
      fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
           std::to_string(n_heads));
    }
    if (head_dim() % 2 != 0) fail("head dim must be even for rotary embeddings");
    if (d_ff == 0) fail("d_ff must be >= 1");
    if (vocab_size < 256) fail("vocab_size must cover the 256 byte tokens");
    if (n_reserved_pst < 1) fail("n_reserved_pst must be >= 1");
    if (!(rope_theta > 0.0)) fail("rope_theta must be positive");
    if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
  j = nlohmann::ordered_json{{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                             {"d_model", c.d_model},       {"d_ff", c.d_ff},
                             {"vocab_size", c.vocab_size}, {"n_reserved_pst", c.n_reserved_pst},
                             {"rope_theta", c.rope_theta}, {"norm_eps", c.norm_eps},
                             {"seed", c.seed}};
}

namespace detail {

// Non-negative integer field; nlohmann would silently wrap -1 into size_t.
template <typename Json>
std::uint64_t get_count(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string(key) + " must be a non-negative integer");
  }
  return v.template get<std::uint64_t>();
}

}  // namespace detail

template <typename Json>
ModelConfig model_config_from_json(const Json& j) {
  static const char* kKeys[] = {"n_layers",       "n_heads",    "d_model",
                                "d_ff",           "vocab_size", "n_reserved_pst",
                                "rope_theta",     "norm_eps",   "seed"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  ModelConfig c;
  try {
    if (j.contains("n_layers")) c.n_layers = detail::get_count(j, "n_layers");
    if (j.contains("n_heads")) c.n_heads = detail::get_count(j, "n_heads");
    if (j.contains("d_model")) c.d_model = detail::get_count(j, "d_model");
    if (j.contains("d_ff")) c.d_ff = detail::get_count(j, "d_ff");
    if (j.contains("vocab_size")) c.vocab_size = detail::get_count(j, "vocab_size");
    if (j.contains("n_reserved_pst")) {
      c.n_reserved_pst = detail::get_count(j, "n_reserved_pst");
    }
    if (j.contains("rope_theta")) c.rope_theta = j.at("rope_theta").template get<double>();
    if (j.contains("norm_eps")) c.norm_eps = j.at("norm_eps").template get<double>();
    if (j.contains("seed")) c.seed = detail::get_count(j, "seed");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // [d x d]
  Matrix gate, up;        // [d x d_ff]
  Matrix down;            // [d_ff x d]
  Vector attn_norm;       // applied before attention
  Vector ffn_norm;        // applied before the FFN
};

struct ModelWeights {
  Matrix embedding;  // [(vocab_size + n_reserved_pst) x d]
  std::vector<LayerWeights> layers;
  Vector final_norm;
};

// Seeded N(0, 0.02) for every matrix (reserved PST rows included), unit norm
// gains. Draw order follows the weight-file tensor order.
inline ModelWeights init_weights(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  auto gaussian = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (float& x : m.data()) x = normal(rng);
    return m;
  };
  const std::size_t d = cfg.d_model;
  ModelWeights w;
  w.embedding = gaussian(cfg.embedding_rows(), d);
  w.layers.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerWeights lw;
    lw.wq = gaussian(d, d);
    lw.wk = gaussian(d, d);
    lw.wv = gaussian(d, d);
    lw.wo = gaussian(d, d);
    lw.gate = gaussian(d, cfg.d_ff);
    lw.up = gaussian(d, cfg.d_ff);
    lw.down = gaussian(cfg.d_ff, d);
    lw.attn_norm.assign(d, 1.0f);
    lw.ffn_norm.assign(d, 1.0f);
    w.layers.push_back(std::move(lw));
  }
  w.final_norm.assign(d, 1.0f);
  return w;
}

// Immutable config + weights; shareable across threads.
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(cfg), w_(init_weights(cfg_)) {}
  Model(ModelConfig cfg, ModelWeights w) : cfg_(cfg), w_(std::move(w)) {
    cfg_.validate();
    check_shapes();
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const ModelWeights& weights() const noexcept { return w_; }

  bool is_pst_id(TokenId id) const {
    return id >= cfg_.vocab_size && id < cfg_.embedding_rows();
  }
  TokenId pst_id(std::size_t slot) const {
    if (slot >= cfg_.n_reserved_pst) {
      throw ConfigError("model reserves only " + std::to_string(cfg_.n_reserved_pst) +
                        " <PST> slots");
    }
    return static_cast<TokenId>(cfg_.vocab_size + slot);
  }

 private:
  void check_shapes() const {
    const std::size_t d = cfg_.d_model, f = cfg_.d_ff;
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* what) {
      if (m.rows() != r || m.cols() != c) {
        throw ShapeError(std::string("weights: ") + what + " has shape " + m.shape_string());
      }
      if (!all_finite(m.data())) throw ShapeError(std::string("weights: ") + what + " not finite");
    };
    expect(w_.embedding, cfg_.embedding_rows(), d, "embedding");
    if (w_.layers.size() != cfg_.n_layers) throw ShapeError("weights: wrong layer count");
    for (const auto& lw : w_.layers) {
      expect(lw.wq, d, d, "wq");
      expect(lw.wk, d, d, "wk");
      expect(lw.wv, d, d, "wv");
      expect(lw.wo, d, d, "wo");
      expect(lw.gate, d, f, "gate");
      expect(lw.up, d, f, "up");
      expect(lw.down, f, d, "down");
      if (lw.attn_norm.size() != d || lw.ffn_norm.size() != d) {
        throw ShapeError("weights: norm gain has wrong size");
      }
    }
    if (w_.final_norm.size() != d) throw ShapeError("weights: final norm has wrong size");
  }

  ModelConfig cfg_;
  ModelWeights w_;
};

// Activations entering layer `layer + 1`. Row r holds absolute sequence
// position offset + r; positions below offset live in a KV cache.
struct HiddenStates {
  std::size_t layer = 0;
  std::size_t offset = 0;
  Matrix rows;

  std::size_t length() const { return offset + rows.rows(); }
};

enum class MaskKind { causal, bidir_last_token, bidir_input_sentence };

// For the bidirectional variants, `start` marks where non-causal attention
// begins and `end` (inclusive, defaults to the last position) where the
// input-sentence window stops.
//   bidir_last_token:      rows >= start also see the final position.
//   bidir_input_sentence:  rows in [start, end] see every position in [start, end].
struct MaskVariant {
  MaskKind kind = MaskKind::causal;
  std::size_t start = 0;
  std::optional<std::size_t> end;
};

// Mask for one forward step over a sequence of `seq_len` positions.
// `hidden_keys` are positions no other row may attend to (their own row still
// sees them).
class AttentionMask {
 public:
  AttentionMask(MaskVariant variant, std::size_t seq_len,
                std::vector<std::size_t> hidden_keys = {})
      : v_(variant), n_(seq_len), hidden_(std::move(hidden_keys)) {
    end_ = v_.end.value_or(n_ == 0 ? 0 : n_ - 1);
    if (v_.kind != MaskKind::causal) {
      if (v_.start >= n_) {
        throw ConfigError("mask window start " + std::to_string(v_.start) +
                          " is outside a sequence of length " + std::to_string(n_));
      }
      if (end_ >= n_ || end_ < v_.start) throw ConfigError("mask window end out of range");
    }
    std::sort(hidden_.begin(), hidden_.end());
  }

  std::size_t seq_len() const { return n_; }

  bool allowed(std::size_t i, std::size_t j) const {
    if (i != j && std::binary_search(hidden_.begin(), hidden_.end(), j)) return false;
    if (j <= i) return true;
    switch (v_.kind) {
      case MaskKind::causal:
        return false;
      case MaskKind::bidir_last_token:
        return i >= v_.start && j == n_ - 1;
      case MaskKind::bidir_input_sentence:
        return i >= v_.start && i <= end_ && j >= v_.start && j <= end_;
    }
    return false;
  }

 private:
  MaskVariant v_;
  std::size_t n_;
  std::size_t end_ = 0;
  std::vector<std::size_t> hidden_;
};

// Keys (after rotary) and values of a frozen prompt prefix, one matrix per
// layer. Only positions that TP never rewrites may be cached.
struct KVCache {
  std::vector<TokenId> prefix_ids;
  std::vector<Matrix> keys;
  std::vector<Matrix> values;

  std::size_t prefix_len() const { return prefix_ids.size(); }
};

// Test hook: attention probabilities of one layer call, one [rows x seq_len]
// matrix per head. Masked entries are exactly 0.
struct AttentionProbe {
  std::vector<Matrix> heads;
};

inline HiddenStates embed_tokens(const Model& model, std::span<const TokenId> ids,
                                 std::optional<std::span<const float>> pst_override = {}) {
  const auto& cfg = model.config();
  const auto& emb = model.weights().embedding;
  if (pst_override && pst_override->size() != cfg.d_model) {
    throw ShapeError("<PST> override has dim " + std::to_string(pst_override->size()) +
                     ", model dim is " + std::to_string(cfg.d_model));
  }
  HiddenStates h{0, 0, Matrix(ids.size(), cfg.d_model)};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id >= cfg.embedding_rows()) {
      throw TokenError("token id " + std::to_string(id) + " out of range for embedding with " +
                       std::to_string(cfg.embedding_rows()) + " rows");
    }
    auto src = (pst_override && model.is_pst_id(id)) ? *pst_override : emb.row(id);
    std::copy(src.begin(), src.end(), h.rows.row(i).begin());
  }
  return h;
}

// Drops the first n rows, recording them as cached prefix.
inline HiddenStates drop_prefix(const HiddenStates& h, std::size_t n) {
  if (n > h.rows.rows()) throw ShapeError("drop_prefix beyond sequence length");
  const std::size_t d = h.rows.cols();
  std::vector<float> data(h.rows.data().begin() + static_cast<std::ptrdiff_t>(n * d),
                          h.rows.data().end());
  return {h.layer, h.offset + n, Matrix(h.rows.rows() - n, d, std::move(data))};
}

namespace detail {

inline Matrix project(const Matrix& x, const Matrix& w) { return matmul(x, w); }

inline HiddenStates layer_forward_impl(const Model& model, std::size_t layer,
                                       const HiddenStates& h, const AttentionMask& mask,
                                       const KVCache* cache, AttentionProbe* probe,
                                       Matrix* k_out, Matrix* v_out) {
  const auto& cfg = model.config();
  if (layer < 1 || layer > cfg.n_layers) {
    throw ConfigError("layer " + std::to_string(layer) + " outside 1.." +
                      std::to_string(cfg.n_layers));
  }
  if (h.layer != layer - 1) {
    throw ConfigError("layer " + std::to_string(layer) + " expects hidden states of layer " +
                      std::to_string(layer - 1) + ", got " + std::to_string(h.layer));
  }
  if (h.rows.cols() != cfg.d_model) throw ShapeError("hidden width != d_model");
  const std::size_t off = h.offset;
  if (cache) {
    if (cache->prefix_len() != off) {
      throw ConfigError("KV cache holds " + std::to_string(cache->prefix_len()) +
                        " prefix positions but hidden states start at " + std::to_string(off));
    }
    if (cache->keys.size() < layer || cache->values.size() < layer) {
      throw ConfigError("KV cache does not cover layer " + std::to_string(layer));
    }
  } else if (off != 0) {
    throw ConfigError("hidden states start at offset " + std::to_string(off) +
                      " but no KV cache was supplied");
  }
  const std::size_t rows = h.rows.rows();
  const std::size_t n = off + rows;
  if (mask.seq_len() != n) throw ShapeError("attention mask length != sequence length");

  const auto& lw = model.weights().layers[layer - 1];
  const std::size_t d = cfg.d_model, hd = cfg.head_dim();
  const float eps = static_cast<float>(cfg.norm_eps);

  Matrix xn(rows, d);
  for (std::size_t r = 0; r < rows; ++r) rms_norm_into(h.rows.row(r), lw.attn_norm, eps, xn.row(r));

  std::vector<std::size_t> positions(rows);
  for (std::size_t r = 0; r < rows; ++r) positions[r] = off + r;
  Matrix q = rope_apply(project(xn, lw.wq), positions, cfg.rope_theta, hd);
  Matrix k = rope_apply(project(xn, lw.wk), positions, cfg.rope_theta, hd);
  Matrix v = project(xn, lw.wv);

  auto key_row = [&](std::size_t j) {
    return j < off ? cache->keys[layer - 1].row(j) : std::span<const float>(k.row(j - off));
  };
  auto value_row = [&](std::size_t j) {
    return j < off ? cache->values[layer - 1].row(j) : std::span<const float>(v.row(j - off));
  };

  if (probe) probe->heads.assign(cfg.n_heads, Matrix(rows, n));
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  Matrix attn(rows, d);
  std::vector<float> logits(n);
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    const std::size_t base = head * hd;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = off + r;
      auto qi = q.row(r).subspan(base, hd);
      for (std::size_t j = 0; j < n; ++j) {
        logits[j] = mask.allowed(i, j) ? dot(qi, key_row(j).subspan(base, hd)) * scale : kNegInf;
      }
      const Vector p = softmax_row(logits);
      auto out = attn.row(r).subspan(base, hd);
      for (std::size_t j = 0; j < n; ++j) {
        if (logits[j] == kNegInf) continue;
        auto vj = value_row(j).subspan(base, hd);
        for (std::size_t c = 0; c < hd; ++c) out[c] += p[j] * vj[c];
      }
      if (probe) {
        for (std::size_t j = 0; j < n; ++j) probe->heads[head](r, j) = p[j];
      }
    }
  }

  HiddenStates out{layer, off, h.rows};
  {
    const Matrix o = project(attn, lw.wo);
    auto& od = out.rows.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += o.data()[i];
  }
  for (std::size_t r = 0; r < rows; ++r) rms_norm_into(out.rows.row(r), lw.ffn_norm, eps, xn.row(r));
  Matrix g = project(xn, lw.gate);
  const Matrix u = project(xn, lw.up);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = silu(g.data()[i]) * u.data()[i];
  const Matrix f = project(g, lw.down);
  auto& od = out.rows.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += f.data()[i];

  if (k_out) *k_out = std::move(k);
  if (v_out) *v_out = std::move(v);
  return out;
}

}  // namespace detail

// One transformer block: x + Attn(RMS(x)), then + FFN(RMS(.)).
inline HiddenStates layer_forward(const Model& model, std::size_t layer, const HiddenStates& h,
                                  const AttentionMask& mask, const KVCache* cache = nullptr,
                                  AttentionProbe* probe = nullptr) {
  return detail::layer_forward_impl(model, layer, h, mask, cache, probe, nullptr, nullptr);
}

// Runs layers from_layer+1 .. to_layer with no interventions.
inline HiddenStates forward_range(const Model& model, HiddenStates h, std::size_t from_layer,
                                  std::size_t to_layer, const AttentionMask& mask,
                                  const KVCache* cache = nullptr) {
  if (from_layer > to_layer || to_layer > model.config().n_layers) {
    throw ConfigError("forward_range [" + std::to_string(from_layer) + ", " +
                      std::to_string(to_layer) + "] outside 0.." +
                      std::to_string(model.config().n_layers));
  }
  if (h.layer != from_layer) throw ConfigError("forward_range: hidden states not at from_layer");
  for (std::size_t l = from_layer + 1; l <= to_layer; ++l) {
    h = layer_forward(model, l, h, mask, cache);
  }
  return h;
}

// Runs the prefix through every layer under a causal mask and keeps its keys
// and values. Valid for any later sequence that starts with `prefix_ids` and
// whose non-causal windows (if any) start at or after the prefix end.
inline KVCache build_prefix_cache(const Model& model, std::span<const TokenId> prefix_ids) {
  KVCache cache;
  cache.prefix_ids.assign(prefix_ids.begin(), prefix_ids.end());
  const std::size_t L = model.config().n_layers;
  cache.keys.resize(L);
  cache.values.resize(L);
  if (prefix_ids.empty()) {
    for (std::size_t l = 0; l < L; ++l) {
      cache.keys[l] = Matrix(0, model.config().d_model);
      cache.values[l] = Matrix(0, model.config().d_model);
    }
    return cache;
  }
  for (TokenId id : prefix_ids) {
    if (model.is_pst_id(id)) throw ConfigError("KV cache prefix may not contain <PST>");
  }
  HiddenStates h = embed_tokens(model, prefix_ids);
  const AttentionMask mask(MaskVariant{}, prefix_ids.size());
  for (std::size_t l = 1; l <= L; ++l) {
    h = detail::layer_forward_impl(model, l, h, mask, nullptr, nullptr, &cache.keys[l - 1],
                                   &cache.values[l - 1]);
  }
  return cache;
}

// Applies the final RMS gain to one row.
inline Vector apply_final_norm(const Model& model, std::span<const float> row) {
  return rms_norm(row, model.weights().final_norm, static_cast<float>(model.config().norm_eps));
}

}  // namespace tokprep
