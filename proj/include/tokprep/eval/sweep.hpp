#pragma once

// Layer-scope sweeps: vary one TP knob and record the average STS score.

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprep/eval/sts.hpp"
#include "tokprep/tp_config_io.hpp"

namespace tokprep::eval {

enum class SweepAxis { end_layer, start_layer, exit_layer };

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::end_layer:
      return "end_layer";
    case SweepAxis::start_layer:
      return "start_layer";
    case SweepAxis::exit_layer:
      return "exit_layer";
  }
  return "end_layer";
}

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "end_layer") return SweepAxis::end_layer;
  if (s == "start_layer") return SweepAxis::start_layer;
  if (s == "exit_layer") return SweepAxis::exit_layer;
  throw ConfigError("unknown sweep axis '" + s + "'");
}

struct SweepPoint {
  std::size_t value = 0;
  DatasetScores scores;
};

struct SweepCurve {
  SweepAxis axis = SweepAxis::end_layer;
  TPConfig base;
  std::vector<SweepPoint> points;
};

inline SweepCurve sweep(const Model& model, const Vocab& vocab, const PromptTemplate& tmpl,
                        const TPConfig& base, const std::vector<NamedSTSDataset>& datasets,
                        SweepAxis axis, const std::vector<std::size_t>& values,
                        std::size_t threads = 1) {
  const std::size_t L = model.config().n_layers;
  if (values.empty()) throw ConfigError("sweep range is empty");
  if (!base.enabled && axis != SweepAxis::exit_layer) {
    throw ConfigError("only the exit_layer axis can be swept with TP disabled");
  }
  SweepCurve curve{axis, base, {}};
  for (std::size_t v : values) {
    if (v < 1 || v > L) {
      throw ConfigError("sweep value " + std::to_string(v) + " outside 1.." + std::to_string(L));
    }
    TPConfig tp = base;
    if (!tp.end_layer && axis != SweepAxis::end_layer) {
      tp.end_layer = resolve(base, L).end_layer;
    }
    if (!tp.exit_layer && axis != SweepAxis::exit_layer) {
      tp.exit_layer = resolve(base, L).exit_layer;
    }
    switch (axis) {
      case SweepAxis::end_layer:
        tp.end_layer = v;
        break;
      case SweepAxis::start_layer:
        // A start past the end layer leaves only the initial placeholder.
        tp.start_layer = v;
        tp.end_layer = std::max(*tp.end_layer, v);
        break;
      case SweepAxis::exit_layer:
        tp.exit_layer = v;
        break;
    }
    const Extractor ex(model, vocab, tmpl, tp);
    curve.points.push_back({v, eval_sts_datasets(datasets, embedder_for(ex), threads)});
  }
  return curve;
}

inline nlohmann::ordered_json curve_to_json(const SweepCurve& c) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(c.axis);
  j["base_config"] = tp_config_to_json(c.base);
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : c.points) {
    nlohmann::ordered_json pj;
    pj["value"] = p.value;
    nlohmann::ordered_json ds = nlohmann::ordered_json::object();
    for (const auto& [name, score] : p.scores.per_dataset) ds[name] = score;
    pj["datasets"] = ds;
    pj["average"] = p.scores.average;
    j["points"].push_back(pj);
  }
  return j;
}

}  // namespace tokprep::eval
