#pragma once

// Prompt templates with a `[TEXT]` slot and `<PST>` placeholder markers.
// Literal segments, the sentence and the placeholders are tokenized
// separately and concatenated, so every position is known exactly.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tokprep/error.hpp"
#include "tokprep/tokenizer.hpp"

namespace tokprep {

inline constexpr std::string_view kPstMarker = "<PST>";
inline constexpr std::string_view kTextSlot = "[TEXT]";
inline constexpr std::string_view kTextSlotAlt = "[Text]";

struct PromptTemplate {
  std::string name;
  std::string text;
};

struct RenderedPrompt {
  TokenSequence tokens;
  std::size_t text_begin = 0;  // [text_begin, text_end) holds the sentence
  std::size_t text_end = 0;
  // Where the template's first <PST> marker or [TEXT] slot landed. Markers
  // dropped with n_pst == 0 still count, so a template caches the same prefix
  // with TP on or off.
  std::size_t first_slot = 0;

  std::size_t set_index() const { return tokens.last_index(); }
  std::size_t length() const { return tokens.length(); }
  const std::vector<std::size_t>& pst_positions() const { return tokens.pst_positions; }

  // Leading tokens ahead of every marker and the sentence; identical for all
  // inputs of one template and never rewritten.
  std::size_t static_prefix_len() const { return first_slot; }
};

namespace detail {

enum class SegmentKind { literal, pst, text };

struct Segment {
  SegmentKind kind;
  std::string literal;
};

inline std::vector<Segment> parse_template(std::string_view body) {
  std::vector<Segment> segs;
  std::string lit;
  for (std::size_t i = 0; i < body.size();) {
    if (body.substr(i).starts_with(kPstMarker)) {
      if (!lit.empty()) segs.push_back({SegmentKind::literal, std::exchange(lit, {})});
      segs.push_back({SegmentKind::pst, {}});
      i += kPstMarker.size();
    } else if (body.substr(i).starts_with(kTextSlot) || body.substr(i).starts_with(kTextSlotAlt)) {
      if (!lit.empty()) segs.push_back({SegmentKind::literal, std::exchange(lit, {})});
      segs.push_back({SegmentKind::text, {}});
      i += kTextSlot.size();
    } else {
      lit.push_back(body[i++]);
    }
  }
  if (!lit.empty()) segs.push_back({SegmentKind::literal, std::move(lit)});
  return segs;
}

}  // namespace detail

inline std::size_t count_pst_markers(const PromptTemplate& t) {
  const auto segs = detail::parse_template(t.text);
  return static_cast<std::size_t>(std::count_if(
      segs.begin(), segs.end(), [](const auto& s) { return s.kind == detail::SegmentKind::pst; }));
}

// A template with nothing but placeholders and the text slot.
inline bool is_prompt_free(const PromptTemplate& t) {
  const auto segs = detail::parse_template(t.text);
  return std::none_of(segs.begin(), segs.end(),
                      [](const auto& s) { return s.kind == detail::SegmentKind::literal; });
}

// Expands the template around `text`. A single <PST> marker expands to n_pst
// consecutive placeholder ids; a template with several markers needs exactly
// n_pst of them. n_pst == 0 drops every marker. Placeholder ids start at
// pst_base (defaults to vocab.size()).
inline RenderedPrompt render(const PromptTemplate& t, std::string_view text, std::size_t n_pst,
                             const Vocab& vocab, std::size_t pst_base = 0) {
  if (pst_base == 0) pst_base = vocab.size();
  if (pst_base < vocab.size()) throw ConfigError("placeholder ids overlap the vocabulary");
  const auto segs = detail::parse_template(t.text);
  std::size_t n_text = 0, n_markers = 0;
  for (const auto& s : segs) {
    n_text += s.kind == detail::SegmentKind::text;
    n_markers += s.kind == detail::SegmentKind::pst;
  }
  if (n_text != 1) {
    throw ConfigError("template '" + t.name + "' must contain exactly one [TEXT] slot, found " +
                      std::to_string(n_text));
  }
  if (n_pst > 0 && n_markers != 1 && n_markers != n_pst) {
    throw ConfigError("template '" + t.name + "' has " + std::to_string(n_markers) +
                      " <PST> markers but " + std::to_string(n_pst) + " were requested");
  }
  if (text.empty() && !is_prompt_free(t)) {
    throw ConfigError("empty sentence for template '" + t.name + "'");
  }

  RenderedPrompt out;
  auto& ids = out.tokens.ids;
  std::size_t slot = 0;
  bool seen_slot = false;
  for (const auto& s : segs) {
    if (s.kind != detail::SegmentKind::literal && !seen_slot) {
      out.first_slot = ids.size();
      seen_slot = true;
    }
    switch (s.kind) {
      case detail::SegmentKind::literal: {
        const auto lit = encode(vocab, s.literal);
        ids.insert(ids.end(), lit.begin(), lit.end());
        break;
      }
      case detail::SegmentKind::pst: {
        const std::size_t count = n_pst == 0 ? 0 : (n_markers == 1 ? n_pst : 1);
        for (std::size_t c = 0; c < count; ++c) {
          out.tokens.pst_positions.push_back(ids.size());
          ids.push_back(static_cast<TokenId>(pst_base + slot++));
        }
        break;
      }
      case detail::SegmentKind::text: {
        out.text_begin = ids.size();
        const auto body = encode(vocab, text);
        ids.insert(ids.end(), body.begin(), body.end());
        out.text_end = ids.size();
        break;
      }
    }
  }
  if (ids.empty()) throw ConfigError("template '" + t.name + "' rendered to an empty sequence");
  return out;
}

inline constexpr std::string_view kPromptEol =
    R"(This sentence : <PST> "[Text]" means in one word: ")";
inline constexpr std::string_view kPretendedCot =
    R"(After thinking step by step , this sentence : <PST> "[Text]" means in one word: ")";

// Knowledge-enhancement style prompt: caller-provided guidance in front of the
// PromptEOL body.
inline PromptTemplate knowledge_template(std::string_view guidance) {
  std::string body(guidance);
  if (!body.empty() && body.back() != ' ') body.push_back(' ');
  body += kPromptEol;
  return {"knowledge", std::move(body)};
}

inline const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> kTemplates = {
      {"prompteol", std::string(kPromptEol)},
      {"prompteol_pst_first", R"(<PST> This sentence : "[Text]" means in one word: ")"},
      {"prompteol_pst_in_quote", R"(This sentence : "<PST> [Text]" means in one word: ")"},
      {"prompteol_pst_after_text", R"(This sentence : " [Text]" <PST> means in one word: ")"},
      {"pretended_cot", std::string(kPretendedCot)},
      {"pretended_cot_pst_before_sentence",
       R"(After thinking step by step , <PST> this sentence :  "[Text]" means in one word: ")"},
      {"pretended_cot_pst_in_quote",
       R"(After thinking step by step , this sentence : "<PST> [Text]" means in one word: ")"},
      {"pretended_cot_pst_after_text",
       R"(After thinking step by step , this sentence : " [Text]" <PST> means in one word: ")"},
      {"prompt_a", "The representative word for sentence <PST> '[TEXT]' is:"},
      {"prompt_b", "Summarize sentence <PST> '[TEXT]' in one word:"},
      {"prompt_c", "Given the keyword <PST>, this sentence: '[TEXT]' means in one word:"},
      {"prompt_d", "This sentence: <PST> and '[TEXT]' means in one word:"},
      {"none", "<PST>[TEXT]"},
  };
  return kTemplates;
}

inline const PromptTemplate* find_builtin_template(std::string_view name) {
  for (const auto& t : builtin_templates()) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

// Template file: first line "name: <id>", the rest is the body verbatim
// (a single trailing newline is dropped).
inline PromptTemplate parse_template_file(std::string_view content) {
  const auto nl = content.find('\n');
  const std::string_view header = content.substr(0, nl);
  constexpr std::string_view kPrefix = "name: ";
  if (!header.starts_with(kPrefix) || header.size() == kPrefix.size()) {
    throw FormatError("template file: first line must be 'name: <id>'");
  }
  PromptTemplate t;
  t.name = std::string(header.substr(kPrefix.size()));
  if (!t.name.empty() && t.name.back() == '\r') t.name.pop_back();
  t.text = nl == std::string_view::npos ? std::string() : std::string(content.substr(nl + 1));
  if (!t.text.empty() && t.text.back() == '\n') t.text.pop_back();
  return t;
}

inline PromptTemplate load_template_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open template " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_template_file(ss.str());
}

// Builtin name first, then a template file path.
inline PromptTemplate resolve_template(const std::string& name_or_path) {
  if (const auto* t = find_builtin_template(name_or_path)) return *t;
  return load_template_file(name_or_path);
}

}  // namespace tokprep
