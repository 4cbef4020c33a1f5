#pragma once

// Token prepending. A <PST> placeholder sits in the prompt; before each layer
// in the active scope its hidden state is overwritten with the previous
// layer's hidden state at the final prompt token, so sentence tokens placed
// after the placeholder can attend to a whole-sentence summary despite the
// causal mask. The embedding is read from the final token at the exit layer.
//
// Layer schedule for a run with start layer s, end layer k, optional resume
// layer r and exit layer M (layers numbered 1..L):
//   layer 1                 sees the initial placeholder embedding
//   layers s+1 .. min(k,M)  see a replaced placeholder row
//   layers k+1 .. M         run untouched, except layers r .. M when resuming
// The readout is the raw residual stream at layer M; the final RMS gain is
// applied only when M == L.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tokprep/error.hpp"
#include "tokprep/model.hpp"
#include "tokprep/prompts.hpp"

namespace tokprep {

enum class PstInitKind { zero, one, uniform01, gaussian, existing_token };

struct PstInit {
  PstInitKind kind = PstInitKind::gaussian;
  TokenId token = 0x20;  // used by existing_token; the space byte by default

  bool operator==(const PstInit&) const = default;
};

struct TPConfig {
  bool enabled = true;
  std::size_t n_pst = 1;
  PstInit pst_init;
  std::size_t start_layer = 1;
  std::optional<std::size_t> end_layer;   // k; defaults from the layer count
  std::optional<std::size_t> resume_layer;
  std::optional<std::size_t> exit_layer;  // M; defaults from the layer count
  MaskKind mask_variant = MaskKind::causal;
  bool mask_pst_first_layer = false;
  std::string template_name = "prompteol";

  bool operator==(const TPConfig&) const = default;
};

// Default end layer: round(L/4), at least one intervention when L allows it.
inline std::size_t default_end_layer(std::size_t n_layers, std::size_t start_layer = 1) {
  const std::size_t k = (n_layers + 2) / 4;
  return std::min(n_layers, std::max(k, start_layer + 1));
}

// Default exit layer: L - 5, never before the end layer.
inline std::size_t default_exit_layer(std::size_t n_layers, std::size_t end_layer) {
  const std::size_t m = n_layers > 5 ? n_layers - 5 : 1;
  return std::min(n_layers, std::max(m, end_layer));
}

// TPConfig with defaults filled in and checked against a layer count.
struct ResolvedTP {
  bool enabled;
  std::size_t n_pst;
  PstInit pst_init;
  std::size_t start_layer;
  std::size_t end_layer;
  std::optional<std::size_t> resume_layer;
  std::size_t exit_layer;
  MaskKind mask_variant;
  bool mask_pst_first_layer;

  // True when the input of `layer` gets its placeholder rows replaced.
  bool replaces_before(std::size_t layer) const {
    if (!enabled) return false;
    if (layer > exit_layer) return false;
    if (layer >= start_layer + 1 && layer <= end_layer) return true;
    return resume_layer && layer >= *resume_layer;
  }
};

inline ResolvedTP resolve(const TPConfig& tp, std::size_t n_layers) {
  auto fail = [](const std::string& m) { throw ConfigError("tp config: " + m); };
  ResolvedTP r{};
  r.enabled = tp.enabled;
  r.n_pst = tp.enabled ? tp.n_pst : 0;
  r.pst_init = tp.pst_init;
  r.start_layer = tp.start_layer;
  r.end_layer = tp.end_layer.value_or(default_end_layer(n_layers, tp.start_layer));
  r.exit_layer = tp.exit_layer.value_or(default_exit_layer(n_layers, r.end_layer));
  r.resume_layer = tp.resume_layer;
  r.mask_variant = tp.mask_variant;
  r.mask_pst_first_layer = tp.mask_pst_first_layer;

  if (r.exit_layer < 1 || r.exit_layer > n_layers) {
    fail("exit_layer " + std::to_string(r.exit_layer) + " outside 1.." + std::to_string(n_layers));
  }
  if (!tp.enabled) return r;
  if (tp.n_pst < 1) fail("n_pst must be >= 1 when TP is enabled");
  if (r.start_layer < 1) fail("start_layer must be >= 1");
  if (r.end_layer < r.start_layer || r.end_layer > n_layers) {
    fail("end_layer " + std::to_string(r.end_layer) + " must lie in [start_layer=" +
         std::to_string(r.start_layer) + ", " + std::to_string(n_layers) + "]");
  }
  if (r.resume_layer) {
    if (*r.resume_layer <= r.start_layer || *r.resume_layer > n_layers) {
      fail("resume_layer must lie in (start_layer, L]");
    }
    if (*r.resume_layer > r.exit_layer) {
      fail("resume_layer " + std::to_string(*r.resume_layer) + " is past exit_layer " +
           std::to_string(r.exit_layer));
    }
  }
  return r;
}

struct Embedding {
  Vector values;
  std::size_t layer = 0;
  std::size_t position = 0;
};

// Overwrites every placeholder row with the row at last_index. Positions are
// absolute; rows below h.offset are cached and cannot be addressed.
inline HiddenStates intermediate_prepend(HiddenStates h, std::span<const std::size_t> pst_positions,
                                         std::size_t last_index) {
  if (pst_positions.empty()) return h;
  if (last_index < h.offset || last_index >= h.length()) {
    throw ConfigError("last index " + std::to_string(last_index) + " outside hidden rows");
  }
  const auto src = h.rows.row(last_index - h.offset);
  const std::vector<float> last(src.begin(), src.end());
  for (std::size_t p : pst_positions) {
    if (p < h.offset || p >= last_index) {
      throw ConfigError("placeholder position " + std::to_string(p) +
                        " must lie in the live rows before the last index");
    }
    std::copy(last.begin(), last.end(), h.rows.row(p - h.offset).begin());
  }
  return h;
}

// Embedding row used for every placeholder, or nullopt to use the model's
// reserved (randomly initialized) rows.
inline std::optional<Vector> pst_embedding(const Model& model, const PstInit& init) {
  const auto& cfg = model.config();
  switch (init.kind) {
    case PstInitKind::zero:
      return Vector(cfg.d_model, 0.0f);
    case PstInitKind::one:
      return Vector(cfg.d_model, 1.0f);
    case PstInitKind::uniform01: {
      std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      Vector v(cfg.d_model);
      for (float& x : v) x = u(rng);
      return v;
    }
    case PstInitKind::gaussian:
      return std::nullopt;
    case PstInitKind::existing_token: {
      if (init.token >= cfg.vocab_size) {
        throw ConfigError("existing_token init needs a vocabulary id, got " +
                          std::to_string(init.token));
      }
      const auto row = model.weights().embedding.row(init.token);
      return Vector(row.begin(), row.end());
    }
  }
  return std::nullopt;
}

// Mask geometry for a rendered prompt: windows start at the first placeholder
// (or the sentence when there is none); the input-sentence window ends at the
// last sentence token.
inline MaskVariant mask_for(const RenderedPrompt& rp, MaskKind kind) {
  MaskVariant mv;
  mv.kind = kind;
  if (kind == MaskKind::causal) return mv;
  mv.start = rp.pst_positions().empty() ? rp.text_begin : rp.pst_positions().front();
  if (kind == MaskKind::bidir_input_sentence) {
    std::size_t end = rp.text_end > 0 ? rp.text_end - 1 : 0;
    if (!rp.pst_positions().empty()) end = std::max(end, rp.pst_positions().back());
    mv.end = std::max(end, mv.start);
  }
  return mv;
}

// Called once per executed layer with the (possibly rewritten) input and the
// output.
using LayerObserver =
    std::function<void(std::size_t layer, const HiddenStates& input, const HiddenStates& output)>;

namespace detail {

inline void check_cache(const KVCache& cache, const RenderedPrompt& rp) {
  const std::size_t p = cache.prefix_len();
  if (p > rp.static_prefix_len()) {
    throw ConfigError("KV cache covers " + std::to_string(p) +
                      " positions but only the first " + std::to_string(rp.static_prefix_len()) +
                      " are static for this prompt");
  }
  if (!std::equal(cache.prefix_ids.begin(), cache.prefix_ids.end(), rp.tokens.ids.begin())) {
    throw ConfigError("KV cache prefix does not match the prompt");
  }
}

}  // namespace detail

// Runs the TP schedule up to the exit layer and returns all live hidden rows
// at that layer.
inline HiddenStates run_token_prepending(const Model& model, const RenderedPrompt& rp,
                                         const ResolvedTP& tp, const KVCache* cache = nullptr,
                                         const LayerObserver& observer = {}) {
  const auto& ids = rp.tokens.ids;
  const auto& pst = rp.pst_positions();
  if (tp.enabled && pst.size() != tp.n_pst) {
    throw ConfigError("prompt has " + std::to_string(pst.size()) + " placeholders, config wants " +
                      std::to_string(tp.n_pst));
  }
  if (tp.enabled && pst.size() > model.config().n_reserved_pst) {
    throw ConfigError("model reserves fewer placeholder rows than requested");
  }
  const MaskKind kind = tp.enabled ? tp.mask_variant : MaskKind::causal;
  const AttentionMask mask(mask_for(rp, kind), rp.length());
  std::optional<AttentionMask> first_layer_mask;
  if (tp.enabled && tp.mask_pst_first_layer) {
    first_layer_mask.emplace(mask_for(rp, kind), rp.length(), pst);
  }

  const auto override = tp.enabled ? pst_embedding(model, tp.pst_init) : std::nullopt;
  HiddenStates h = override ? embed_tokens(model, ids, std::span<const float>(*override))
                            : embed_tokens(model, ids);
  if (cache) {
    detail::check_cache(*cache, rp);
    h = drop_prefix(h, cache->prefix_len());
  }

  for (std::size_t l = 1; l <= tp.exit_layer; ++l) {
    if (tp.replaces_before(l)) h = intermediate_prepend(std::move(h), pst, rp.set_index());
    const AttentionMask& m = (l == 1 && first_layer_mask) ? *first_layer_mask : mask;
    HiddenStates out = layer_forward(model, l, h, m, cache);
    if (observer) observer(l, h, out);
    h = std::move(out);
  }
  return h;
}

inline Embedding read_embedding(const Model& model, const HiddenStates& h, std::size_t position) {
  if (position < h.offset || position >= h.length()) {
    throw ConfigError("readout position outside hidden rows");
  }
  const auto row = h.rows.row(position - h.offset);
  Embedding e;
  e.layer = h.layer;
  e.position = position;
  e.values = h.layer == model.config().n_layers ? apply_final_norm(model, row)
                                                : Vector(row.begin(), row.end());
  return e;
}

inline Embedding extract_embedding(const Model& model, const RenderedPrompt& rp,
                                   const TPConfig& tp, const KVCache* cache = nullptr) {
  const ResolvedTP r = resolve(tp, model.config().n_layers);
  const HiddenStates h = run_token_prepending(model, rp, r, cache);
  return read_embedding(model, h, rp.set_index());
}

// Plain forward pass to exit_layer and readout of the final prompt token.
inline Embedding extract_embedding_vanilla(const Model& model, const RenderedPrompt& rp,
                                           std::size_t exit_layer,
                                           const KVCache* cache = nullptr) {
  const std::size_t L = model.config().n_layers;
  if (exit_layer < 1 || exit_layer > L) {
    throw ConfigError("exit layer " + std::to_string(exit_layer) + " outside 1.." +
                      std::to_string(L));
  }
  HiddenStates h = embed_tokens(model, rp.tokens.ids);
  if (cache) {
    detail::check_cache(*cache, rp);
    h = drop_prefix(h, cache->prefix_len());
  }
  h = forward_range(model, std::move(h), 0, exit_layer, AttentionMask({}, rp.length()), cache);
  return read_embedding(model, h, rp.set_index());
}

// Renders `text` with `t` for the given config (no placeholders when TP is off).
inline RenderedPrompt render_for(const Model& model, const Vocab& vocab, const PromptTemplate& t,
                                 std::string_view text, const TPConfig& tp) {
  if (vocab.size() > model.config().vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " tokens but the model embeds only " +
                      std::to_string(model.config().vocab_size));
  }
  return render(t, text, tp.enabled ? tp.n_pst : 0, vocab, model.config().vocab_size);
}

// Unweighted mean of the per-template embeddings.
inline Embedding multi_prompt_embedding(const Model& model, const Vocab& vocab,
                                        std::string_view text,
                                        std::span<const PromptTemplate> templates,
                                        const TPConfig& tp) {
  if (templates.empty()) throw ConfigError("multi_prompt_embedding needs at least one template");
  Embedding mean;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const Embedding e = extract_embedding(model, render_for(model, vocab, templates[i], text, tp), tp);
    if (i == 0) {
      mean = e;
    } else {
      for (std::size_t c = 0; c < e.values.size(); ++c) mean.values[c] += e.values[c];
    }
  }
  const float n = static_cast<float>(templates.size());
  for (float& x : mean.values) x /= n;
  return mean;
}

// Text -> embedding for one template and TP config, reusing a KV cache of the
// template's static prefix. Immutable after construction; safe to share
// across threads.
class Extractor {
 public:
  Extractor(const Model& model, const Vocab& vocab, PromptTemplate tmpl, TPConfig tp,
            bool use_cache = true)
      : model_(&model),
        vocab_(&vocab),
        tmpl_(std::move(tmpl)),
        tp_(std::move(tp)),
        resolved_(resolve(tp_, model.config().n_layers)) {
    if (use_cache) {
      const std::vector<TokenId> prefix = static_prefix_ids();
      if (!prefix.empty()) cache_ = build_prefix_cache(model, prefix);
    }
  }

  Embedding embed(std::string_view text) const {
    const RenderedPrompt rp = render_for(*model_, *vocab_, tmpl_, text, tp_);
    const KVCache* cache = cache_ ? &*cache_ : nullptr;
    if (!tp_.enabled) return extract_embedding_vanilla(*model_, rp, resolved_.exit_layer, cache);
    return read_embedding(*model_, run_token_prepending(*model_, rp, resolved_, cache),
                          rp.set_index());
  }

  RenderedPrompt render(std::string_view text) const {
    return render_for(*model_, *vocab_, tmpl_, text, tp_);
  }

  const ResolvedTP& resolved() const { return resolved_; }
  const TPConfig& config() const { return tp_; }
  const PromptTemplate& prompt_template() const { return tmpl_; }
  std::size_t cached_prefix_len() const { return cache_ ? cache_->prefix_len() : 0; }

 private:
  // Tokens ahead of the first placeholder / sentence token. Rendering a
  // probe sentence exposes them without duplicating the template parser.
  std::vector<TokenId> static_prefix_ids() const {
    const RenderedPrompt rp = render_for(*model_, *vocab_, tmpl_, "x", tp_);
    return {rp.tokens.ids.begin(),
            rp.tokens.ids.begin() + static_cast<std::ptrdiff_t>(rp.static_prefix_len())};
  }

  const Model* model_;
  const Vocab* vocab_;
  PromptTemplate tmpl_;
  TPConfig tp_;
  ResolvedTP resolved_;
  std::optional<KVCache> cache_;
};

}  // namespace tokprep
