#pragma once

// Dependency-capture analysis. The last sentence token is the pivot; a
// sentence's score is the mean cosine between the pivot's exit-layer hidden
// state and every other sentence token's. Higher scores mean the sentence
// tokens share more information with the pivot.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tokprep/eval/metrics.hpp"
#include "tokprep/parallel.hpp"
#include "tokprep/tp_engine.hpp"

namespace tokprep::eval {

inline constexpr const char* kDependencyMetric =
    "mean cosine(pivot, token_j) over sentence tokens j != pivot at the exit layer; "
    "pivot = last sentence token";

// Box-plot summary with linearly interpolated quartiles.
struct BoxSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

inline double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline BoxSummary summarize(std::vector<double> v) {
  if (v.empty()) throw DomainError("cannot summarize an empty sample");
  std::sort(v.begin(), v.end());
  BoxSummary b;
  b.min = v.front();
  b.max = v.back();
  b.q1 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q3 = quantile_sorted(v, 0.75);
  double sum = 0.0;
  for (double x : v) sum += x;
  b.mean = sum / static_cast<double>(v.size());
  return b;
}

// rows [begin, end) form the sentence; the pivot is end - 1.
inline double mean_pivot_cosine(const Matrix& rows, std::size_t begin, std::size_t end) {
  if (end > rows.rows() || begin > end || end - begin < 3) {
    throw DomainError("dependency analysis needs a sentence span of at least 3 tokens");
  }
  const std::size_t pivot = end - 1;
  double sum = 0.0;
  for (std::size_t j = begin; j < pivot; ++j) sum += cosine(rows.row(pivot), rows.row(j));
  return sum / static_cast<double>(pivot - begin);
}

inline double dependency_score(const Model& model, const RenderedPrompt& rp, const TPConfig& tp) {
  const ResolvedTP r = resolve(tp, model.config().n_layers);
  const HiddenStates h = run_token_prepending(model, rp, r);
  return mean_pivot_cosine(h.rows, rp.text_begin, rp.text_end);
}

struct DependencyReport {
  std::vector<double> tp_scores;
  std::vector<double> vanilla_scores;
  BoxSummary tp;
  BoxSummary vanilla;
};

// Scores every sentence under `tp` and under plain extraction at the same
// exit layer.
inline DependencyReport dependency_analysis(const Model& model, const Vocab& vocab,
                                            const PromptTemplate& tmpl,
                                            const std::vector<std::string>& sentences,
                                            const TPConfig& tp, std::size_t threads = 1) {
  if (sentences.empty()) throw ConfigError("dependency analysis needs sentences");
  TPConfig vanilla = tp;
  vanilla.enabled = false;
  vanilla.exit_layer = resolve(tp, model.config().n_layers).exit_layer;
  DependencyReport rep;
  auto arm = [&](const TPConfig& cfg) {
    return parallel_map<double>(sentences.size(), threads, [&](std::size_t i) {
      return dependency_score(model, render_for(model, vocab, tmpl, sentences[i], cfg), cfg);
    });
  };
  rep.tp_scores = arm(tp);
  rep.vanilla_scores = arm(vanilla);
  rep.tp = summarize(rep.tp_scores);
  rep.vanilla = summarize(rep.vanilla_scores);
  return rep;
}

}  // namespace tokprep::eval
