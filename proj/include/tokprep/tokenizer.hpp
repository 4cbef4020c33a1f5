#pragma once

// Byte-level BPE tokenizer. Ids 0..255 are raw bytes; id 256 + r is the
// token produced by merge rank r. Text is split into chunks (a run of leading
// whitespace followed by a run of non-whitespace) and merges never cross a
// chunk boundary.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tokprep/error.hpp"

namespace tokprep {

using TokenId = std::uint32_t;

class Vocab {
 public:
  Vocab() {
    tokens_.reserve(256);
    for (int b = 0; b < 256; ++b) {
      tokens_.emplace_back(1, static_cast<char>(b));
      by_string_.emplace(tokens_.back(), static_cast<TokenId>(b));
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const noexcept {
    return merges_;
  }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  // Appends a merge; returns the new token id. Merged strings must be new.
  TokenId add_merge(TokenId left, TokenId right) {
    if (left >= size() || right >= size()) {
      throw TokenError("merge refers to unknown token id");
    }
    std::string merged = tokens_[left] + tokens_[right];
    if (by_string_.contains(merged)) {
      throw FormatError("duplicate merged token '" + merged + "'");
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(merged);
    by_string_.emplace(std::move(merged), id);
    rank_.emplace(pair_key(left, right), static_cast<std::uint32_t>(merges_.size()));
    merges_.emplace_back(left, right);
    return id;
  }

  bool has_token(std::string_view s) const {
    return by_string_.contains(std::string(s));
  }
  TokenId id_of(std::string_view s) const {
    auto it = by_string_.find(std::string(s));
    if (it == by_string_.end()) throw TokenError("unknown token string");
    return it->second;
  }

  // Merge rank of an adjacent pair, or -1.
  long rank_of(TokenId left, TokenId right) const {
    auto it = rank_.find(pair_key(left, right));
    return it == rank_.end() ? -1 : static_cast<long>(it->second);
  }

  static std::uint64_t pair_key(TokenId l, TokenId r) {
    return (static_cast<std::uint64_t>(l) << 32) | r;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> by_string_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::unordered_map<std::uint64_t, std::uint32_t> rank_;
};

// Token ids of one prompt plus the positions of its <PST> placeholders.
// Placeholder ids are vocab_size + slot.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::size_t> pst_positions;

  std::size_t length() const { return ids.size(); }
  std::size_t last_index() const {
    if (ids.empty()) throw TokenError("empty token sequence has no last index");
    return ids.size() - 1;
  }
};

namespace detail {

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Leading whitespace run + following non-whitespace run.
inline std::vector<std::string_view> split_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

inline std::vector<TokenId> bytes_of(std::string_view s) {
  std::vector<TokenId> ids;
  ids.reserve(s.size());
  for (unsigned char c : s) ids.push_back(c);
  return ids;
}

// Replaces every non-overlapping (left, right) occurrence, scanning left to
// right.
inline void apply_merge(std::vector<TokenId>& syms, TokenId left, TokenId right,
                        TokenId merged) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w++] = merged;
      r += 2;
    } else {
      syms[w++] = syms[r++];
    }
  }
  syms.resize(w);
}

}  // namespace detail

// Greedy BPE: repeatedly merge the most frequent adjacent pair (ties broken by
// the lexicographic order of the two token strings) until target_vocab tokens
// exist or no pair occurs twice. Pairs whose concatenation is already a token
// are skipped so token strings stay unique.
inline Vocab train_bpe(const std::vector<std::string>& corpus, std::size_t target_vocab) {
  if (corpus.empty()) throw ConfigError("train_bpe: empty corpus");
  if (target_vocab < 256) throw ConfigError("train_bpe: target_vocab must be >= 256");

  std::map<std::string_view, std::uint64_t> chunk_freq;
  for (const auto& line : corpus) {
    for (auto c : detail::split_chunks(line)) ++chunk_freq[c];
  }
  std::vector<std::vector<TokenId>> words;
  std::vector<std::uint64_t> freqs;
  for (const auto& [chunk, f] : chunk_freq) {
    words.push_back(detail::bytes_of(chunk));
    freqs.push_back(f);
  }

  Vocab vocab;
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  while (vocab.size() < target_vocab) {
    counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& syms = words[w];
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        counts[Vocab::pair_key(syms[i], syms[i + 1])] += freqs[w];
      }
    }
    bool found = false;
    std::uint64_t best_key = 0, best_count = 0;
    for (const auto& [key, count] : counts) {
      if (count < 2) continue;
      const auto l = static_cast<TokenId>(key >> 32);
      const auto r = static_cast<TokenId>(key & 0xffffffffu);
      bool better = !found || count > best_count;
      if (found && count == best_count) {
        const auto bl = static_cast<TokenId>(best_key >> 32);
        const auto br = static_cast<TokenId>(best_key & 0xffffffffu);
        better = std::pair(vocab.token(l), vocab.token(r)) <
                 std::pair(vocab.token(bl), vocab.token(br));
      }
      if (better && !vocab.has_token(vocab.token(l) + vocab.token(r))) {
        found = true;
        best_key = key;
        best_count = count;
      }
    }
    if (!found) break;
    const auto l = static_cast<TokenId>(best_key >> 32);
    const auto r = static_cast<TokenId>(best_key & 0xffffffffu);
    const TokenId merged = vocab.add_merge(l, r);
    for (auto& syms : words) detail::apply_merge(syms, l, r, merged);
  }
  return vocab;
}

inline std::vector<TokenId> encode(const Vocab& vocab, std::string_view text) {
  std::vector<TokenId> ids;
  for (auto chunk : detail::split_chunks(text)) {
    auto syms = detail::bytes_of(chunk);
    for (;;) {
      long best = -1;
      std::size_t at = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        const long r = vocab.rank_of(syms[i], syms[i + 1]);
        if (r >= 0 && (best < 0 || r < best)) {
          best = r;
          at = i;
        }
      }
      if (best < 0) break;
      const TokenId left = syms[at], right = syms[at + 1];
      detail::apply_merge(syms, left, right, static_cast<TokenId>(256 + best));
    }
    ids.insert(ids.end(), syms.begin(), syms.end());
  }
  return ids;
}

// Ids at or above pst_base are intervention placeholders and never decode.
// pst_base defaults to the vocabulary size.
inline std::string decode(const Vocab& vocab, const std::vector<TokenId>& ids,
                          std::size_t pst_base = 0) {
  if (pst_base == 0) pst_base = vocab.size();
  std::string out;
  for (TokenId id : ids) {
    if (id >= pst_base) {
      throw TokenError("id " + std::to_string(id) +
                       " is a reserved <PST> placeholder and has no text");
    }
    if (id >= vocab.size()) {
      throw TokenError("unknown token id " + std::to_string(id));
    }
    out += vocab.token(id);
  }
  return out;
}

// ---- vocab file: "bpe-vocab v1 <size>" then one "left\tright" merge per line.

namespace detail {

inline std::string escape_token(const std::string& s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    if (c >= 0x21 && c <= 0x7e && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else {
      out += "\\x";
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

inline std::string unescape_token(std::string_view s, std::size_t line_no) {
  auto hex = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FormatError("vocab line " + std::to_string(line_no) + ": bad hex escape");
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 3 >= s.size() || s[i + 1] != 'x') {
      throw FormatError("vocab line " + std::to_string(line_no) + ": bad escape");
    }
    out.push_back(static_cast<char>(hex(s[i + 2]) * 16 + hex(s[i + 3])));
    i += 3;
  }
  return out;
}

}  // namespace detail

inline std::string serialize_vocab(const Vocab& vocab) {
  std::string out = "bpe-vocab v1 " + std::to_string(vocab.size()) + "\n";
  for (const auto& [l, r] : vocab.merges()) {
    out += detail::escape_token(vocab.token(l));
    out += '\t';
    out += detail::escape_token(vocab.token(r));
    out += '\n';
  }
  return out;
}

inline Vocab parse_vocab(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("vocab: missing header");
  std::size_t declared = 0;
  {
    std::istringstream hs(line);
    std::string magic, version;
    if (!(hs >> magic >> version >> declared) || magic != "bpe-vocab" || version != "v1") {
      throw FormatError("vocab: bad header '" + line + "'");
    }
    std::string extra;
    if (hs >> extra) throw FormatError("vocab: bad header '" + line + "'");
  }
  Vocab vocab;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError("vocab line " + std::to_string(line_no) +
                        ": expected two tab-separated tokens");
    }
    const auto left = detail::unescape_token(std::string_view(line).substr(0, tab), line_no);
    const auto right = detail::unescape_token(std::string_view(line).substr(tab + 1), line_no);
    if (!vocab.has_token(left) || !vocab.has_token(right)) {
      throw FormatError("vocab line " + std::to_string(line_no) +
                        ": merge refers to an undefined token");
    }
    vocab.add_merge(vocab.id_of(left), vocab.id_of(right));
  }
  if (vocab.size() != declared) {
    throw FormatError("vocab: header declares " + std::to_string(declared) +
                      " tokens but file defines " + std::to_string(vocab.size()));
  }
  return vocab;
}

inline void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << serialize_vocab(vocab);
  if (!f) throw FormatError("failed writing " + path);
}

inline Vocab load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open vocab " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_vocab(ss.str());
}

}  // namespace tokprep
