#pragma once

// Weight container:
//   "TPWT" | u32 version (=1) | u32 json_len | ModelConfig JSON (json_len bytes)
//   | f32 tensors, all little-endian, in this order:
//     embedding, then per layer wq wk wv wo gate up down attn_norm ffn_norm,
//     then final_norm.
// The loader rejects files whose length differs from the one implied by the
// config by even a single byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprep/error.hpp"
#include "tokprep/model.hpp"

namespace tokprep {

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32s_le(std::string& out, std::span<const float> v) {
  for (float x : v) put_u32_le(out, std::bit_cast<std::uint32_t>(x));
}

inline void get_f32s_le(const unsigned char*& p, std::span<float> v) {
  for (float& x : v) {
    x = std::bit_cast<float>(get_u32_le(p));
    p += 4;
  }
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path);
}

inline std::size_t tensor_floats(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  const std::size_t per_layer = 4 * d * d + 3 * d * f + 2 * d;
  return c.embedding_rows() * d + c.n_layers * per_layer + d;
}

}  // namespace detail

inline constexpr char kWeightMagic[4] = {'T', 'P', 'W', 'T'};
inline constexpr std::uint32_t kWeightVersion = 1;

inline std::string serialize_weights(const Model& model) {
  const nlohmann::ordered_json cfg_json = model.config();
  const std::string cfg = cfg_json.dump();
  std::string out(kWeightMagic, 4);
  detail::put_u32_le(out, kWeightVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto& w = model.weights();
  out.reserve(out.size() + 4 * detail::tensor_floats(model.config()));
  detail::put_f32s_le(out, w.embedding.data());
  for (const auto& lw : w.layers) {
    for (const Matrix* m : {&lw.wq, &lw.wk, &lw.wv, &lw.wo, &lw.gate, &lw.up, &lw.down}) {
      detail::put_f32s_le(out, m->data());
    }
    detail::put_f32s_le(out, lw.attn_norm);
    detail::put_f32s_le(out, lw.ffn_norm);
  }
  detail::put_f32s_le(out, w.final_norm);
  return out;
}

inline Model parse_weights(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    throw FormatError("weights: missing TPWT magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = detail::get_u32_le(p + 4);
  if (version != kWeightVersion) {
    throw FormatError("weights: unsupported version " + std::to_string(version));
  }
  const std::uint32_t json_len = detail::get_u32_le(p + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(json_len)) {
    throw FormatError("weights: truncated config header");
  }
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(bytes.substr(12, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights: bad config JSON: ") + e.what());
  }
  const ModelConfig cfg = model_config_from_json(cfg_json);
  const std::size_t expected = 12 + json_len + 4 * detail::tensor_floats(cfg);
  if (bytes.size() != expected) {
    throw FormatError("weights: file is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
  const std::size_t d = cfg.d_model, f = cfg.d_ff;
  const unsigned char* cur = p + 12 + json_len;
  ModelWeights w;
  w.embedding = Matrix(cfg.embedding_rows(), d);
  detail::get_f32s_le(cur, w.embedding.data());
  w.layers.resize(cfg.n_layers);
  for (auto& lw : w.layers) {
    lw.wq = Matrix(d, d);
    lw.wk = Matrix(d, d);
    lw.wv = Matrix(d, d);
    lw.wo = Matrix(d, d);
    lw.gate = Matrix(d, f);
    lw.up = Matrix(d, f);
    lw.down = Matrix(f, d);
    for (Matrix* m : {&lw.wq, &lw.wk, &lw.wv, &lw.wo, &lw.gate, &lw.up, &lw.down}) {
      detail::get_f32s_le(cur, m->data());
    }
    lw.attn_norm.resize(d);
    lw.ffn_norm.resize(d);
    detail::get_f32s_le(cur, lw.attn_norm);
    detail::get_f32s_le(cur, lw.ffn_norm);
  }
  w.final_norm.resize(d);
  detail::get_f32s_le(cur, w.final_norm);
  return Model(cfg, std::move(w));
}

inline void save_weights(const Model& model, const std::string& path) {
  detail::write_file_bytes(path, serialize_weights(model));
}

inline Model load_weights(const std::string& path) {
  return parse_weights(detail::read_file_bytes(path));
}

}  // namespace tokprep
