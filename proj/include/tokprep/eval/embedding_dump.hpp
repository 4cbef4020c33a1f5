#pragma once

// Embedding dump:
//   "TPEB" | u32 version (=1) | u32 header_len | JSON header {count, dim, config}
//   | count x dim f32, all little-endian.

#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprep/error.hpp"
#include "tokprep/weights_io.hpp"

namespace tokprep::eval {

struct EmbeddingDump {
  std::size_t dim = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::vector<float>> rows;
};

inline std::string serialize_dump(const EmbeddingDump& d) {
  nlohmann::ordered_json header;
  header["count"] = d.rows.size();
  header["dim"] = d.dim;
  header["config"] = d.config;
  const std::string h = header.dump();
  std::string out = "TPEB";
  tokprep::detail::put_u32_le(out, 1);
  tokprep::detail::put_u32_le(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& r : d.rows) {
    if (r.size() != d.dim) throw ShapeError("embedding dump row has wrong dimension");
    tokprep::detail::put_f32s_le(out, r);
  }
  return out;
}

inline EmbeddingDump parse_dump(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "TPEB", 4) != 0) {
    throw FormatError("embedding dump: missing TPEB magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (tokprep::detail::get_u32_le(p + 4) != 1) throw FormatError("embedding dump: bad version");
  const std::size_t hlen = tokprep::detail::get_u32_le(p + 8);
  if (bytes.size() < 12 + hlen) throw FormatError("embedding dump: truncated header");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("embedding dump: bad header: ") + e.what());
  }
  EmbeddingDump d;
  std::size_t count = 0;
  try {
    count = header.at("count").get<std::size_t>();
    d.dim = header.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("embedding dump: ") + e.what());
  }
  if (header.contains("config")) d.config = header["config"];
  if (bytes.size() != 12 + hlen + 4 * count * d.dim) {
    throw FormatError("embedding dump: payload length does not match count x dim");
  }
  const unsigned char* cur = p + 12 + hlen;
  d.rows.assign(count, std::vector<float>(d.dim));
  for (auto& r : d.rows) tokprep::detail::get_f32s_le(cur, r);
  return d;
}

inline void save_dump(const EmbeddingDump& d, const std::string& path) {
  tokprep::detail::write_file_bytes(path, serialize_dump(d));
}

inline EmbeddingDump load_dump(const std::string& path) {
  return parse_dump(tokprep::detail::read_file_bytes(path));
}

}  // namespace tokprep::eval
