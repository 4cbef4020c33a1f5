#pragma once

// Wall-clock comparison of extraction configs at batch size 1 with the
// template's static prefix served from a KV cache. Each config reports the
// median of its repetitions.

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "tokprep/tp_engine.hpp"

namespace tokprep::eval {

struct BenchArm {
  std::string name;
  TPConfig tp;
};

struct BenchResult {
  std::string name;
  double median_seconds = 0.0;
  double ratio = 0.0;  // vs the first arm
  std::size_t processed_tokens = 0;  // per pass, cached prefix excluded
  std::vector<double> rep_seconds;
};

struct BenchOptions {
  std::size_t warmup = 2;
  std::size_t repetitions = 5;
  std::size_t min_sentences = 100;
};

inline std::vector<BenchResult> bench_time(const Model& model, const Vocab& vocab,
                                           const PromptTemplate& tmpl,
                                           const std::vector<std::string>& sentences,
                                           const std::vector<BenchArm>& arms,
                                           const BenchOptions& opt = {}) {
  if (arms.empty()) throw ConfigError("bench needs at least one config");
  if (sentences.size() < opt.min_sentences) {
    throw ConfigError("bench needs at least " + std::to_string(opt.min_sentences) +
                      " sentences, got " + std::to_string(sentences.size()));
  }
  if (opt.repetitions == 0) throw ConfigError("bench needs at least one repetition");
  std::vector<Extractor> extractors;
  extractors.reserve(arms.size());
  for (const auto& a : arms) extractors.emplace_back(model, vocab, tmpl, a.tp, true);

  std::vector<BenchResult> results(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) {
    results[a].name = arms[a].name;
    for (const auto& s : sentences) {
      results[a].processed_tokens += extractors[a].render(s).length() - extractors[a].cached_prefix_len();
    }
  }
  // One pass embeds every sentence with every arm, alternating arms per
  // sentence (rotating which goes first) so load changes on the host hit all
  // arms alike. Returns per-arm seconds for the pass.
  volatile float sink = 0.0f;
  auto pass = [&] {
    std::vector<double> secs(arms.size(), 0.0);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      for (std::size_t k = 0; k < arms.size(); ++k) {
        const std::size_t a = (i + k) % arms.size();
        const auto t0 = std::chrono::steady_clock::now();
        sink = sink + extractors[a].embed(sentences[i]).values[0];
        secs[a] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    }
    return secs;
  };
  for (std::size_t w = 0; w < opt.warmup; ++w) pass();
  for (std::size_t r = 0; r < opt.repetitions; ++r) {
    const auto secs = pass();
    for (std::size_t a = 0; a < arms.size(); ++a) results[a].rep_seconds.push_back(secs[a]);
  }

  for (auto& res : results) {
    auto v = res.rep_seconds;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    res.median_seconds = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  for (auto& res : results) res.ratio = res.median_seconds / results.front().median_seconds;
  return results;
}

}  // namespace tokprep::eval
