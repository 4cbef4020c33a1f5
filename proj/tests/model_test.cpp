#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "test_support.hpp"
#include "tokprep/model.hpp"
#include "tokprep/parallel.hpp"
#include "tokprep/weights_io.hpp"

namespace tokprep {
namespace {

using testing::bitwise_equal;
using testing::tiny_config;

std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

// Hidden states entering every layer 0..L for a full (uncached) pass.
std::vector<HiddenStates> all_layers(const Model& m, HiddenStates h, const AttentionMask& mask) {
  std::vector<HiddenStates> out{h};
  for (std::size_t l = 1; l <= m.config().n_layers; ++l) {
    h = layer_forward(m, l, h, mask);
    out.push_back(h);
  }
  return out;
}

TEST(ModelConfig, Validation) {
  auto c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.d_model = 6;
  c.n_heads = 2;  // head dim 3 is odd
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.n_reserved_pst = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(Model{c}, ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  const auto c = testing::toy_config(42);
  const nlohmann::ordered_json j = c;
  const ModelConfig back = model_config_from_json(j);
  EXPECT_EQ(nlohmann::ordered_json(back).dump(), j.dump());
  EXPECT_THROW(model_config_from_json(nlohmann::json::parse(R"({"n_layer": 3})")), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json::parse(R"({"n_layers": "x"})")),
               ConfigError);
}

TEST(InitWeights, SeedDeterminism) {
  const Model a(tiny_config(3)), b(tiny_config(3)), c(tiny_config(4));
  EXPECT_EQ(serialize_weights(a), serialize_weights(b));
  EXPECT_NE(a.weights().embedding, c.weights().embedding);
}

TEST(InitWeights, EmbeddingSampleStatistics) {
  const Model m(testing::toy_config(0));
  const auto& e = m.weights().embedding.data();
  const double n = static_cast<double>(e.size());
  ASSERT_GE(n, 1e5);
  double sum = 0.0, sq = 0.0;
  for (float x : e) sum += x;
  const double mean = sum / n;
  for (float x : e) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / (n - 1));
  // Standard errors of the sample mean and sample std of N(0, 0.02).
  EXPECT_LE(std::abs(mean), 3.0 * 0.02 / std::sqrt(n));
  EXPECT_LE(std::abs(sd - 0.02), 3.0 * 0.02 / std::sqrt(2.0 * n));
}

TEST(EmbedTokens, LookupAndOverride) {
  const Model m(tiny_config());
  const std::vector<TokenId> ids{5, m.pst_id(0), 7};
  const HiddenStates plain = embed_tokens(m, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(plain.rows.row(i), m.weights().embedding.row(ids[i])));
  }
  const std::vector<float> zero(32, 0.0f);
  const HiddenStates z = embed_tokens(m, ids, std::span<const float>(zero));
  EXPECT_TRUE(bitwise_equal(z.rows.row(1), zero));
  EXPECT_TRUE(bitwise_equal(z.rows.row(0), plain.rows.row(0)));

  std::vector<float> v(32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.25f * static_cast<float>(i) - 3.0f;
  EXPECT_TRUE(bitwise_equal(embed_tokens(m, ids, std::span<const float>(v)).rows.row(1), v));

  EXPECT_THROW(embed_tokens(m, std::vector<TokenId>{516}), TokenError);
  EXPECT_THROW(embed_tokens(m, ids, std::span<const float>(zero).first(5)), ShapeError);
}

TEST(LayerForward, PreservesRowCountAndChecksLayer) {
  const Model m(tiny_config());
  std::mt19937_64 rng(1);
  const auto ids = random_ids(rng, 9, 512);
  HiddenStates h = embed_tokens(m, ids);
  const AttentionMask mask(MaskVariant{}, ids.size());
  for (std::size_t l = 1; l <= 4; ++l) {
    h = layer_forward(m, l, h, mask);
    EXPECT_EQ(h.rows.rows(), ids.size());
    EXPECT_EQ(h.layer, l);
  }
  EXPECT_THROW(layer_forward(m, 2, embed_tokens(m, ids), mask), ConfigError);
  EXPECT_THROW(layer_forward(m, 5, h, mask), ConfigError);
  EXPECT_THROW(layer_forward(m, 1, embed_tokens(m, ids), AttentionMask({}, 8)), ShapeError);
}

TEST(LayerForward, CausalProbabilitiesVanishAboveDiagonal) {
  const Model m(tiny_config());
  std::mt19937_64 rng(2);
  const auto ids = random_ids(rng, 7, 512);
  AttentionProbe probe;
  layer_forward(m, 1, embed_tokens(m, ids), AttentionMask({}, 7), nullptr, &probe);
  ASSERT_EQ(probe.heads.size(), 2u);
  for (const auto& p : probe.heads) {
    for (std::size_t i = 0; i < 7; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        if (j > i) EXPECT_EQ(p(i, j), 0.0f);
        else EXPECT_GT(p(i, j), 0.0f);
        row += p(i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
    }
  }
}

TEST(LayerForward, BidirectionalWindowsInProbe) {
  const Model m(tiny_config());
  std::mt19937_64 rng(3);
  const auto ids = random_ids(rng, 8, 512);
  const auto h = embed_tokens(m, ids);

  AttentionProbe last;
  layer_forward(m, 1, h, AttentionMask({MaskKind::bidir_last_token, 3}, 8), nullptr, &last);
  AttentionProbe window;
  layer_forward(m, 1, h, AttentionMask({MaskKind::bidir_input_sentence, 2, 5}, 8), nullptr,
                &window);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) {
      const bool sees_last = i >= 3 && j == 7;
      EXPECT_EQ(last.heads[0](i, j) > 0.0f, sees_last) << i << "," << j;
      const bool in_window = i >= 2 && i <= 5 && j <= 5;
      EXPECT_EQ(window.heads[1](i, j) > 0.0f, in_window) << i << "," << j;
    }
  }
  EXPECT_THROW(AttentionMask({MaskKind::bidir_last_token, 8}, 8), ConfigError);
  EXPECT_THROW(AttentionMask({MaskKind::bidir_input_sentence, 4, 3}, 8), ConfigError);
}

TEST(LayerForward, HiddenKeysInvisibleToOtherRows) {
  const Model m(tiny_config());
  std::mt19937_64 rng(4);
  const auto ids = random_ids(rng, 6, 512);
  AttentionProbe probe;
  layer_forward(m, 1, embed_tokens(m, ids), AttentionMask({}, 6, {2}), nullptr, &probe);
  for (std::size_t i = 0; i < 6; ++i) {
    if (i == 2) EXPECT_GT(probe.heads[0](i, 2), 0.0f);
    else EXPECT_EQ(probe.heads[0](i, 2), 0.0f);
  }
}

// Hand-rolled one-token block: softmax over a single key is 1, so attention
// returns the value vector and rotary never matters.
TEST(LayerForward, SingleTokenMatchesHandComputation) {
  const Model m(tiny_config(9));
  const auto& lw = m.weights().layers[0];
  const std::size_t d = 32, f = 64;
  const auto x = m.weights().embedding.row(100);
  auto rms = [&](const std::vector<double>& v, const Vector& g) {
    double ss = 0.0;
    for (double a : v) ss += a * a;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(v.size()) + 1e-5);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = g[i] * v[i] * inv;
    return out;
  };
  auto times = [](const std::vector<double>& v, const Matrix& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) out[j] += v[i] * w(i, j);
    return out;
  };
  std::vector<double> h(x.begin(), x.end());
  const auto attn = times(times(rms(h, lw.attn_norm), lw.wv), lw.wo);
  for (std::size_t i = 0; i < d; ++i) h[i] += attn[i];
  const auto xn = rms(h, lw.ffn_norm);
  auto g = times(xn, lw.gate);
  const auto u = times(xn, lw.up);
  for (std::size_t i = 0; i < f; ++i) g[i] = g[i] / (1.0 + std::exp(-g[i])) * u[i];
  const auto ffn = times(g, lw.down);
  for (std::size_t i = 0; i < d; ++i) h[i] += ffn[i];

  const HiddenStates out =
      layer_forward(m, 1, embed_tokens(m, std::vector<TokenId>{100}), AttentionMask({}, 1));
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(out.rows(0, i), h[i], 1e-6) << i;
}

TEST(Causality, PerturbationNeverReachesEarlierPositions) {
  const Model m(tiny_config());
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ids = random_ids(rng, 10, 512);
    const std::size_t p = 1 + static_cast<std::size_t>(trial) % 9;
    HiddenStates a = embed_tokens(m, ids), b = a;
    b.rows(p, 0) += 0.5f;
    const AttentionMask mask({}, ids.size());
    const auto la = all_layers(m, a, mask), lb = all_layers(m, b, mask);
    for (std::size_t l = 0; l < la.size(); ++l) {
      for (std::size_t i = 0; i < p; ++i) {
        ASSERT_TRUE(bitwise_equal(la[l].rows.row(i), lb[l].rows.row(i))) << l << " " << i;
      }
      if (l > 0) EXPECT_FALSE(bitwise_equal(la[l].rows.row(9), lb[l].rows.row(9)));
    }
  }
}

TEST(Causality, BidirectionalVariantsLeakOnlyInsideTheirWindow) {
  const Model m(tiny_config());
  std::mt19937_64 rng(6);
  const auto ids = random_ids(rng, 10, 512);
  HiddenStates a = embed_tokens(m, ids);
  {
    // Perturb the final token: rows >= start change, rows before stay put.
    HiddenStates b = a;
    b.rows(9, 3) += 0.5f;
    const AttentionMask mask({MaskKind::bidir_last_token, 4}, 10);
    const auto out_a = layer_forward(m, 1, a, mask), out_b = layer_forward(m, 1, b, mask);
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_EQ(bitwise_equal(out_a.rows.row(i), out_b.rows.row(i)), i < 4) << i;
    }
  }
  {
    // Perturb inside [3, 6]: earlier window rows change, rows before 3 do not.
    HiddenStates b = a;
    b.rows(6, 1) += 0.5f;
    const AttentionMask mask({MaskKind::bidir_input_sentence, 3, 6}, 10);
    const auto out_a = layer_forward(m, 1, a, mask), out_b = layer_forward(m, 1, b, mask);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(bitwise_equal(out_a.rows.row(i), out_b.rows.row(i)), i < 3) << i;
    }
  }
}

TEST(ForwardRange, EmptyRangeAndComposition) {
  const Model m(tiny_config());
  std::mt19937_64 rng(7);
  const auto ids = random_ids(rng, 8, 512);
  const AttentionMask mask({}, 8);
  const HiddenStates h0 = embed_tokens(m, ids);
  EXPECT_EQ(forward_range(m, h0, 0, 0, mask).rows, h0.rows);

  const HiddenStates full = forward_range(m, h0, 0, 4, mask);
  const auto layers = all_layers(m, h0, mask);
  EXPECT_EQ(full.rows, layers[4].rows);
  for (std::size_t split = 1; split < 4; ++split) {
    const HiddenStates mid = forward_range(m, h0, 0, split, mask);
    EXPECT_EQ(forward_range(m, mid, split, 4, mask).rows, full.rows) << split;
  }
  EXPECT_THROW(forward_range(m, h0, 0, 5, mask), ConfigError);
  EXPECT_THROW(forward_range(m, h0, 2, 1, mask), ConfigError);
  EXPECT_THROW(forward_range(m, h0, 1, 2, mask), ConfigError);
}

TEST(KVCache, CachedPrefixGivesIdenticalRows) {
  const Model m(tiny_config());
  std::mt19937_64 rng(8);
  for (std::size_t prefix : {0u, 1u, 4u, 7u}) {
    const auto ids = random_ids(rng, 12, 512);
    const std::span<const TokenId> pre(ids.data(), prefix);
    const KVCache cache = build_prefix_cache(m, pre);
    const AttentionMask mask({}, ids.size());
    HiddenStates full = embed_tokens(m, ids);
    HiddenStates part = drop_prefix(full, prefix);
    for (std::size_t l = 1; l <= 4; ++l) {
      full = layer_forward(m, l, full, mask);
      part = layer_forward(m, l, part, mask, &cache);
      ASSERT_EQ(part.offset, prefix);
      for (std::size_t i = prefix; i < ids.size(); ++i) {
        ASSERT_TRUE(bitwise_equal(full.rows.row(i), part.rows.row(i - prefix))) << l << " " << i;
      }
    }
  }
}

TEST(KVCache, InconsistentCacheRejected) {
  const Model m(tiny_config());
  const std::vector<TokenId> ids{1, 2, 3, 4, 5};
  const KVCache cache = build_prefix_cache(m, std::span<const TokenId>(ids).first(2));
  const AttentionMask mask({}, 5);
  EXPECT_THROW(layer_forward(m, 1, drop_prefix(embed_tokens(m, ids), 3), mask, &cache),
               ConfigError);
  EXPECT_THROW(layer_forward(m, 1, drop_prefix(embed_tokens(m, ids), 2), mask), ConfigError);
  const std::vector<TokenId> with_pst{1, m.pst_id(0)};
  EXPECT_THROW(build_prefix_cache(m, with_pst), ConfigError);
}

TEST(Determinism, ThreadCountDoesNotChangeResults) {
  const Model m(tiny_config());
  std::mt19937_64 rng(9);
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 12; ++i) seqs.push_back(random_ids(rng, 5 + i, 512));
  auto run = [&](std::size_t threads) {
    return parallel_map<Matrix>(seqs.size(), threads, [&](std::size_t i) {
      return forward_range(m, embed_tokens(m, seqs[i]), 0, 4, AttentionMask({}, seqs[i].size()))
          .rows;
    });
  };
  const auto one = run(1), three = run(3), again = run(1);
  EXPECT_EQ(one, three);
  EXPECT_EQ(one, again);
}

class WeightFile : public ::testing::Test {
 protected:
  void TearDown() override { std::filesystem::remove(path_); }
  std::string path_ = (std::filesystem::temp_directory_path() / "tokprep_weights.tpwt").string();
};

TEST_F(WeightFile, RoundTripIsBitwise) {
  const Model m(tiny_config(11));
  save_weights(m, path_);
  const Model back = load_weights(path_);
  EXPECT_EQ(serialize_weights(back), serialize_weights(m));
  EXPECT_EQ(back.weights().layers[3].down, m.weights().layers[3].down);
  EXPECT_EQ(std::filesystem::file_size(path_), serialize_weights(m).size());
}

TEST_F(WeightFile, LengthMustMatchExactly) {
  const std::string bytes = serialize_weights(Model(tiny_config()));
  EXPECT_NO_THROW(parse_weights(bytes));
  EXPECT_THROW(parse_weights(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(parse_weights(bytes + '\0'), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_weights(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(parse_weights(bad), FormatError);
  EXPECT_THROW(load_weights(path_ + ".missing"), FormatError);
}

TEST_F(WeightFile, LayoutFollowsDocumentedOrder) {
  const Model m(tiny_config());
  const std::string bytes = serialize_weights(m);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t json_len = detail::get_u32_le(p + 8);
  const unsigned char* cur = p + 12 + json_len;
  std::vector<float> first(32);
  detail::get_f32s_le(cur, first);
  EXPECT_TRUE(bitwise_equal(first, m.weights().embedding.row(0)));
  // The final norm closes the file.
  cur = p + bytes.size() - 4 * 32;
  std::vector<float> last(32);
  detail::get_f32s_le(cur, last);
  EXPECT_TRUE(bitwise_equal(last, m.weights().final_norm));
}

}  // namespace
}  // namespace tokprep
