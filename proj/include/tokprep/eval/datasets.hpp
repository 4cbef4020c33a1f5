#pragma once

// Line-oriented dataset files.
//   STS:            score<TAB>sentence_a<TAB>sentence_b   (score in [0, 5])
//   classification: label<TAB>text                        (label a non-negative integer)
//   sentences:      one sentence per line
// Blank lines are skipped; a trailing '\r' is stripped.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "tokprep/error.hpp"

namespace tokprep::eval {

struct STSPair {
  std::string sentence_a;
  std::string sentence_b;
  double gold = 0.0;
};

struct LabeledExample {
  std::string text;
  std::size_t label = 0;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no) + ": ";
}

}  // namespace detail

inline std::vector<STSPair> parse_sts_lines(const std::vector<std::string>& lines,
                                            const std::string& source = "<sts>") {
  std::vector<STSPair> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = detail::split_tabs(lines[i]);
    if (fields.size() != 3) {
      throw FormatError(detail::where(source, i + 1) + "expected 3 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    STSPair p;
    const auto* first = fields[0].data();
    const auto* last = first + fields[0].size();
    const auto res = std::from_chars(first, last, p.gold);
    if (res.ec != std::errc() || res.ptr != last) {
      throw FormatError(detail::where(source, i + 1) + "score '" + std::string(fields[0]) +
                        "' is not a decimal number");
    }
    if (!(p.gold >= 0.0 && p.gold <= 5.0)) {
      throw FormatError(detail::where(source, i + 1) + "score outside [0, 5]");
    }
    p.sentence_a = std::string(fields[1]);
    p.sentence_b = std::string(fields[2]);
    if (p.sentence_a.empty() || p.sentence_b.empty()) {
      throw FormatError(detail::where(source, i + 1) + "empty sentence");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<STSPair> load_sts_tsv(const std::string& path) {
  return parse_sts_lines(detail::read_lines(path), path);
}

inline std::vector<LabeledExample> parse_labeled_lines(const std::vector<std::string>& lines,
                                                       const std::string& source = "<labels>") {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw FormatError(detail::where(source, i + 1) + "expected label<TAB>text");
    }
    LabeledExample ex;
    const char* first = lines[i].data();
    const char* last = first + tab;
    const auto res = std::from_chars(first, last, ex.label);
    if (res.ec != std::errc() || res.ptr != last) {
      throw FormatError(detail::where(source, i + 1) + "label is not a non-negative integer");
    }
    ex.text = lines[i].substr(tab + 1);
    if (ex.text.empty()) throw FormatError(detail::where(source, i + 1) + "empty text");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<LabeledExample> load_labeled_tsv(const std::string& path) {
  return parse_labeled_lines(detail::read_lines(path), path);
}

inline std::vector<std::string> load_sentences(const std::string& path) {
  std::vector<std::string> out;
  for (auto& line : detail::read_lines(path)) {
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

struct NamedSTSDataset {
  std::string name;
  std::vector<STSPair> pairs;
};

// Every *.tsv file of a directory, sorted by file name; the stem names it.
inline std::vector<NamedSTSDataset> load_sts_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError(dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tsv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError(dir + " contains no .tsv datasets");
  std::vector<NamedSTSDataset> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_sts_tsv(f.string())});
  return out;
}

}  // namespace tokprep::eval
