#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tokprep/eval/datasets.hpp"
#include "tokprep/eval/metrics.hpp"
#include "tokprep/parallel.hpp"
#include "tokprep/tp_engine.hpp"

namespace tokprep::eval {

using Embedder = std::function<Embedding(std::string_view)>;

// Spearman x 100 between pair cosines and gold scores. Sentences are embedded
// on `threads` workers; the reduction itself is sequential.
inline double eval_sts(const std::vector<STSPair>& pairs, const Embedder& embedder,
                       std::size_t threads = 1) {
  if (pairs.size() < 2) throw DomainError("STS evaluation needs at least two pairs");
  const auto embs = parallel_map<Embedding>(2 * pairs.size(), threads, [&](std::size_t i) {
    const auto& p = pairs[i / 2];
    return embedder(i % 2 == 0 ? p.sentence_a : p.sentence_b);
  });
  std::vector<double> pred(pairs.size()), gold(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pred[i] = cosine(embs[2 * i].values, embs[2 * i + 1].values);
    gold[i] = pairs[i].gold;
  }
  return 100.0 * spearman(pred, gold);
}

struct DatasetScores {
  std::vector<std::pair<std::string, double>> per_dataset;  // in evaluation order
  double average = 0.0;
};

inline DatasetScores eval_sts_datasets(const std::vector<NamedSTSDataset>& datasets,
                                       const Embedder& embedder, std::size_t threads = 1) {
  if (datasets.empty()) throw ConfigError("no STS datasets given");
  DatasetScores s;
  double sum = 0.0;
  for (const auto& d : datasets) {
    const double score = eval_sts(d.pairs, embedder, threads);
    s.per_dataset.emplace_back(d.name, score);
    sum += score;
  }
  s.average = sum / static_cast<double>(datasets.size());
  return s;
}

inline Embedder embedder_for(const Extractor& ex) {
  return [&ex](std::string_view text) { return ex.embed(text); };
}

}  // namespace tokprep::eval
