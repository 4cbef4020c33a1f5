#pragma once

// TP run configuration as JSON. Accepted keys: enabled, n_pst, pst_init,
// start_layer, end_layer, resume_layer, exit_layer, mask_variant,
// mask_pst_first_layer, template. Anything else is rejected; omitted keys
// keep their defaults and null layers mean "derive from the model depth".

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tokprep/error.hpp"
#include "tokprep/tp_engine.hpp"

namespace tokprep {

inline std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::causal:
      return "causal";
    case MaskKind::bidir_last_token:
      return "bidir_last_token";
    case MaskKind::bidir_input_sentence:
      return "bidir_input_sentence";
  }
  return "causal";
}

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "causal") return MaskKind::causal;
  if (s == "bidir_last_token") return MaskKind::bidir_last_token;
  if (s == "bidir_input_sentence") return MaskKind::bidir_input_sentence;
  throw ConfigError("unknown mask_variant '" + s + "'");
}

inline std::string to_string(const PstInit& p) {
  switch (p.kind) {
    case PstInitKind::zero:
      return "zero";
    case PstInitKind::one:
      return "one";
    case PstInitKind::uniform01:
      return "uniform01";
    case PstInitKind::gaussian:
      return "gaussian";
    case PstInitKind::existing_token:
      return "existing_token:" + std::to_string(p.token);
  }
  return "gaussian";
}

// "zero" | "one" | "uniform01" | "gaussian" | "existing_token[:<id>]"
inline PstInit parse_pst_init(const std::string& s) {
  if (s == "zero") return {PstInitKind::zero};
  if (s == "one") return {PstInitKind::one};
  if (s == "uniform01") return {PstInitKind::uniform01};
  if (s == "gaussian") return {PstInitKind::gaussian};
  constexpr std::string_view kTok = "existing_token";
  if (s.starts_with(kTok)) {
    PstInit p{PstInitKind::existing_token};
    if (s.size() == kTok.size()) return p;
    if (s[kTok.size()] != ':') throw ConfigError("unknown pst_init '" + s + "'");
    try {
      std::size_t used = 0;
      const auto id = std::stoul(s.substr(kTok.size() + 1), &used);
      if (used != s.size() - kTok.size() - 1) throw std::invalid_argument("trailing");
      p.token = static_cast<TokenId>(id);
    } catch (const std::exception&) {
      throw ConfigError("bad token id in pst_init '" + s + "'");
    }
    return p;
  }
  throw ConfigError("unknown pst_init '" + s + "'");
}

inline nlohmann::ordered_json tp_config_to_json(const TPConfig& tp) {
  auto opt = [](const std::optional<std::size_t>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return nlohmann::ordered_json{{"enabled", tp.enabled},
                                {"n_pst", tp.n_pst},
                                {"pst_init", to_string(tp.pst_init)},
                                {"start_layer", tp.start_layer},
                                {"end_layer", opt(tp.end_layer)},
                                {"resume_layer", opt(tp.resume_layer)},
                                {"exit_layer", opt(tp.exit_layer)},
                                {"mask_variant", to_string(tp.mask_variant)},
                                {"mask_pst_first_layer", tp.mask_pst_first_layer},
                                {"template", tp.template_name}};
}

template <typename Json>
TPConfig tp_config_from_json(const Json& j) {
  static const char* kKeys[] = {"enabled",      "n_pst",      "pst_init",
                                "start_layer",  "end_layer",  "resume_layer",
                                "exit_layer",   "mask_variant", "mask_pst_first_layer",
                                "template"};
  if (!j.is_object()) throw ConfigError("tp config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw ConfigError("tp config: unknown key '" + key + "'");
    }
  }
  auto opt_layer = [&](const char* key) -> std::optional<std::size_t> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return detail::get_count(j, key);
  };
  TPConfig tp;
  try {
    if (j.contains("enabled")) tp.enabled = j.at("enabled").template get<bool>();
    if (j.contains("n_pst")) tp.n_pst = detail::get_count(j, "n_pst");
    if (j.contains("pst_init")) {
      const auto& p = j.at("pst_init");
      if (p.is_object()) {
        if (p.size() != 1 || !p.contains("existing_token")) {
          throw ConfigError("pst_init object must be {\"existing_token\": <id>}");
        }
        tp.pst_init = {PstInitKind::existing_token,
                       static_cast<TokenId>(detail::get_count(p, "existing_token"))};
      } else {
        tp.pst_init = parse_pst_init(p.template get<std::string>());
      }
    }
    if (j.contains("start_layer")) tp.start_layer = detail::get_count(j, "start_layer");
    tp.end_layer = opt_layer("end_layer");
    tp.resume_layer = opt_layer("resume_layer");
    tp.exit_layer = opt_layer("exit_layer");
    if (j.contains("mask_variant")) {
      tp.mask_variant = parse_mask_kind(j.at("mask_variant").template get<std::string>());
    }
    if (j.contains("mask_pst_first_layer")) {
      tp.mask_pst_first_layer = j.at("mask_pst_first_layer").template get<bool>();
    }
    if (j.contains("template")) tp.template_name = j.at("template").template get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tp config: ") + e.what());
  }
  return tp;
}

inline TPConfig load_tp_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open tp config " + path);
  try {
    return tp_config_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("tp config " + path + ": " + e.what());
  }
}

}  // namespace tokprep
