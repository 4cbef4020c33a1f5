#pragma once

// Subcommand implementations for the `tokprep` tool. Every command writes its
// artifact through write_artifact(), so a failed run leaves no partial file.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprep/tokprep.hpp"

namespace tokprep::cli {

using Json = nlohmann::ordered_json;

// Writes to a sibling temp file and renames it into place.
inline void write_artifact(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".partial";
  try {
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw FormatError("cannot open " + path + " for writing");
      f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      f.flush();
      if (!f) throw FormatError("failed writing " + path);
    }
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

inline std::string pretty(const Json& j) { return j.dump(2) + "\n"; }

inline std::string fixed2(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

// Reproducibility header echoed into every report.
struct RunManifest {
  std::string command;
  Json configs = Json::object();
  Json datasets = Json::object();
  Json outputs = Json::object();
  std::optional<std::uint64_t> seed;

  Json to_json() const {
    Json j;
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    j["configs"] = configs;
    j["datasets"] = datasets;
    j["outputs"] = outputs;
    return j;
  }
};

// Options shared by every command that extracts embeddings.
struct ModelArgs {
  std::string model;
  std::string vocab;
  std::string tp = "off";  // "off" or a TP config path
  std::string template_name;  // overrides the TP config's template
  std::size_t threads = 0;  // 0: TP_THREADS or 1
};

struct Loaded {
  Model model;
  Vocab vocab;
  TPConfig tp;
  PromptTemplate tmpl;
  std::size_t threads;
};

inline Loaded load(const ModelArgs& a) {
  TPConfig tp;
  if (a.tp == "off") {
    tp.enabled = false;
  } else {
    tp = load_tp_config(a.tp);
  }
  if (!a.template_name.empty()) tp.template_name = a.template_name;
  Loaded l{load_weights(a.model), load_vocab(a.vocab), tp, resolve_template(tp.template_name),
           a.threads ? a.threads : threads_from_env()};
  resolve(l.tp, l.model.config().n_layers);  // fail early on a bad scope
  if (l.vocab.size() > l.model.config().vocab_size) {
    throw ConfigError("vocabulary " + a.vocab + " has " + std::to_string(l.vocab.size()) +
                      " tokens but the model embeds " +
                      std::to_string(l.model.config().vocab_size));
  }
  return l;
}

inline Json resolved_json(const Loaded& l) {
  const ResolvedTP r = resolve(l.tp, l.model.config().n_layers);
  Json j = tp_config_to_json(l.tp);
  j["end_layer"] = r.end_layer;
  j["exit_layer"] = r.exit_layer;
  return j;
}

inline RunManifest manifest_for(const std::string& command, const ModelArgs& a, const Loaded& l) {
  RunManifest m;
  m.command = command;
  m.seed = l.model.config().seed;
  m.configs["model"] = a.model;
  m.configs["vocab"] = a.vocab;
  m.configs["tp"] = a.tp;
  m.configs["template"] = l.tmpl.name;
  return m;
}

inline TPConfig vanilla_of(const Loaded& l) {
  TPConfig v = l.tp;
  v.enabled = false;
  v.exit_layer = resolve(l.tp, l.model.config().n_layers).exit_layer;
  return v;
}

// ---- init-model

struct InitModelArgs {
  std::string config;
  std::string out;
  std::string corpus;
  std::string vocab_out;
};

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open model config " + path);
  try {
    return model_config_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model config " + path + ": " + e.what());
  }
}

inline int cmd_init_model(const InitModelArgs& a) {
  const ModelConfig cfg = load_model_config(a.config);
  if (a.corpus.empty() != a.vocab_out.empty()) {
    throw ConfigError("--corpus and --vocab-out go together");
  }
  std::optional<Vocab> vocab;
  if (!a.corpus.empty()) {
    vocab = train_bpe(eval::load_sentences(a.corpus), cfg.vocab_size);
  }
  const Model model(cfg);
  write_artifact(a.out, serialize_weights(model));
  if (vocab) write_artifact(a.vocab_out, serialize_vocab(*vocab));
  std::cerr << "wrote " << a.out << " (L=" << cfg.n_layers << ", d=" << cfg.d_model
            << ", seed=" << cfg.seed << ")";
  if (vocab) std::cerr << " and " << a.vocab_out << " (" << vocab->size() << " tokens)";
  std::cerr << "\n";
  return 0;
}

// ---- embed

struct EmbedArgs {
  ModelArgs m;
  std::string in;
  std::string out;
};

inline int cmd_embed(const EmbedArgs& a) {
  const Loaded l = load(a.m);
  const auto sentences = eval::load_sentences(a.in);
  const Extractor ex(l.model, l.vocab, l.tmpl, l.tp);
  eval::EmbeddingDump dump;
  dump.dim = l.model.config().d_model;
  dump.config = Json{{"model", a.m.model},
                     {"vocab", a.m.vocab},
                     {"template", l.tmpl.name},
                     {"tp", resolved_json(l)},
                     {"input", a.in}};
  dump.rows = parallel_map<std::vector<float>>(sentences.size(), l.threads, [&](std::size_t i) {
    return ex.embed(sentences[i]).values;
  });
  write_artifact(a.out, eval::serialize_dump(dump));
  std::cerr << "embedded " << sentences.size() << " sentences -> " << a.out << "\n";
  return 0;
}

// ---- eval-sts

struct EvalStsArgs {
  ModelArgs m;
  std::string data;
  std::string report;
  bool compare = false;
};

inline Json scores_json(const eval::DatasetScores& s) {
  Json j = Json::object();
  for (const auto& [name, v] : s.per_dataset) j[name] = v;
  return j;
}

inline int cmd_eval_sts(const EvalStsArgs& a) {
  const Loaded l = load(a.m);
  const auto datasets = eval::load_sts_dir(a.data);
  const Extractor ex(l.model, l.vocab, l.tmpl, l.tp);
  const auto scores = eval::eval_sts_datasets(datasets, eval::embedder_for(ex), l.threads);

  RunManifest man = manifest_for("eval-sts", a.m, l);
  man.datasets["sts_dir"] = a.data;
  for (const auto& d : datasets) man.datasets[d.name] = d.pairs.size();
  man.outputs["report"] = a.report;

  Json r;
  r["manifest"] = man.to_json();
  r["tp"] = resolved_json(l);
  r["metric"] = "spearman x 100 of cosine vs gold";
  r["datasets"] = scores_json(scores);
  r["average"] = scores.average;
  std::optional<eval::DatasetScores> base;
  if (a.compare) {
    const Extractor van(l.model, l.vocab, l.tmpl, vanilla_of(l));
    base = eval::eval_sts_datasets(datasets, eval::embedder_for(van), l.threads);
    Json cmp;
    cmp["vanilla"] = scores_json(*base);
    cmp["vanilla_average"] = base->average;
    Json delta = Json::object();
    for (std::size_t i = 0; i < scores.per_dataset.size(); ++i) {
      delta[scores.per_dataset[i].first] =
          scores.per_dataset[i].second - base->per_dataset[i].second;
    }
    cmp["delta"] = delta;
    cmp["delta_average"] = scores.average - base->average;
    r["compare"] = cmp;
  }
  write_artifact(a.report, pretty(r));

  for (std::size_t i = 0; i < scores.per_dataset.size(); ++i) {
    std::cerr << scores.per_dataset[i].first << ": " << fixed2(scores.per_dataset[i].second);
    if (base) {
      const double d = scores.per_dataset[i].second - base->per_dataset[i].second;
      std::cerr << " (" << (d >= 0 ? "+" : "") << fixed2(d) << " vs vanilla)";
    }
    std::cerr << "\n";
  }
  std::cerr << "avg: " << fixed2(scores.average) << "\n";
  return 0;
}

// ---- sweep

struct SweepArgs {
  ModelArgs m;
  std::string data;
  std::string axis = "end_layer";
  std::size_t from = 0;
  std::size_t to = 0;
  std::string out;
};

inline int cmd_sweep(const SweepArgs& a) {
  const Loaded l = load(a.m);
  const auto datasets = eval::load_sts_dir(a.data);
  const std::size_t L = l.model.config().n_layers;
  const std::size_t from = a.from ? a.from : 1, to = a.to ? a.to : L;
  if (from > to) throw ConfigError("sweep range is empty: --from > --to");
  std::vector<std::size_t> values;
  for (std::size_t v = from; v <= to; ++v) values.push_back(v);
  const auto curve = eval::sweep(l.model, l.vocab, l.tmpl, l.tp, datasets,
                                 eval::parse_sweep_axis(a.axis), values, l.threads);

  RunManifest man = manifest_for("sweep", a.m, l);
  man.datasets["sts_dir"] = a.data;
  man.outputs["curve"] = a.out;
  Json r;
  r["manifest"] = man.to_json();
  r["curve"] = eval::curve_to_json(curve);
  write_artifact(a.out, pretty(r));
  for (const auto& p : curve.points) {
    std::cerr << a.axis << "=" << p.value << ": avg " << fixed2(p.scores.average) << "\n";
  }
  return 0;
}

// ---- bench

struct BenchArgs {
  ModelArgs m;  // m.tp is ignored; arms come from tp_arms
  std::vector<std::string> tp_arms;
  std::string in;
  std::string report;
  std::size_t warmup = 2;
  std::size_t reps = 5;
};

inline int cmd_bench(const BenchArgs& a) {
  if (a.tp_arms.empty()) throw ConfigError("bench needs at least one --tp config");
  ModelArgs first = a.m;
  first.tp = a.tp_arms.front();
  const Loaded l = load(first);
  const auto sentences = eval::load_sentences(a.in);

  std::vector<eval::BenchArm> arms{{"vanilla", vanilla_of(l)}};
  for (const auto& path : a.tp_arms) {
    if (path == "off") {
      arms.push_back({"off", vanilla_of(l)});
      continue;
    }
    TPConfig tp = load_tp_config(path);
    tp.template_name = l.tmpl.name;
    resolve(tp, l.model.config().n_layers);
    arms.push_back({path, tp});
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = eval::bench_time(l.model, l.vocab, l.tmpl, sentences, arms,
                                    {a.warmup, a.reps, 100});
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunManifest man = manifest_for("bench", first, l);
  man.configs["tp"] = a.tp_arms;
  man.datasets["sentences"] = a.in;
  man.outputs["report"] = a.report;
  Json r;
  r["manifest"] = man.to_json();
  r["manifest"]["wall_time_seconds"] = wall;
  r["protocol"] = Json{{"batch_size", 1},
                       {"kv_cache", "static template prefix"},
                       {"warmup_passes", a.warmup},
                       {"repetitions", a.reps},
                       {"statistic", "median"},
                       {"sentences", sentences.size()}};
  Json arms_j = Json::array();
  for (std::size_t i = 0; i < res.size(); ++i) {
    arms_j.push_back(Json{{"name", res[i].name},
                          {"tp", tp_config_to_json(arms[i].tp)},
                          {"processed_tokens", res[i].processed_tokens},
                          {"median_seconds", res[i].median_seconds},
                          {"ratio_vs_vanilla", res[i].ratio},
                          {"rep_seconds", res[i].rep_seconds}});
  }
  r["arms"] = arms_j;
  write_artifact(a.report, pretty(r));
  for (const auto& x : res) {
    std::cerr << x.name << ": median " << fixed2(x.median_seconds * 1000.0) << " ms/pass, ratio "
              << fixed2(x.ratio) << "\n";
  }
  return 0;
}

// ---- analyze-dep

struct AnalyzeDepArgs {
  ModelArgs m;
  std::string in;
  std::string report;
};

inline Json box_json(const eval::BoxSummary& b) {
  return Json{{"min", b.min},       {"q1", b.q1},   {"median", b.median},
              {"q3", b.q3},         {"max", b.max}, {"mean", b.mean}};
}

inline int cmd_analyze_dep(const AnalyzeDepArgs& a) {
  const Loaded l = load(a.m);
  if (!l.tp.enabled) throw ConfigError("analyze-dep compares a TP config against vanilla; got --tp off");
  const auto sentences = eval::load_sentences(a.in);
  const auto rep = eval::dependency_analysis(l.model, l.vocab, l.tmpl, sentences, l.tp, l.threads);

  RunManifest man = manifest_for("analyze-dep", a.m, l);
  man.datasets["sentences"] = a.in;
  man.outputs["report"] = a.report;
  Json r;
  r["manifest"] = man.to_json();
  r["tp"] = resolved_json(l);
  r["metric"] = eval::kDependencyMetric;
  r["summary"] = Json{{"tp", box_json(rep.tp)}, {"vanilla", box_json(rep.vanilla)}};
  r["per_sentence"] = Json{{"tp", rep.tp_scores}, {"vanilla", rep.vanilla_scores}};
  write_artifact(a.report, pretty(r));
  std::cerr << "median dependency: tp " << fixed2(rep.tp.median) << ", vanilla "
            << fixed2(rep.vanilla.median) << " (" << sentences.size() << " sentences)\n";
  return 0;
}

// ---- eval-transfer

struct EvalTransferArgs {
  ModelArgs m;
  std::string train;
  std::string test;
  std::string report;
  eval::LogRegOptions opt{1e-4, 200, 0.1};
};

inline int cmd_eval_transfer(const EvalTransferArgs& a) {
  const Loaded l = load(a.m);
  const auto train = eval::load_labeled_tsv(a.train);
  const auto test = eval::load_labeled_tsv(a.test);
  const Extractor ex(l.model, l.vocab, l.tmpl, l.tp);
  auto features = [&](const std::vector<eval::LabeledExample>& xs) {
    return parallel_map<std::vector<double>>(xs.size(), l.threads, [&](std::size_t i) {
      const auto v = ex.embed(xs[i].text).values;
      return std::vector<double>(v.begin(), v.end());
    });
  };
  auto labels = [](const std::vector<eval::LabeledExample>& xs) {
    std::vector<std::size_t> y;
    for (const auto& e : xs) y.push_back(e.label);
    return y;
  };
  const auto xtr_raw = features(train);
  const eval::Standardizer z(xtr_raw);
  const auto xtr = z.apply(xtr_raw), xte = z.apply(features(test));
  const auto ytr = labels(train), yte = labels(test);
  const auto clf = eval::train_logreg(xtr, ytr, a.opt);
  for (auto y : yte) {
    if (y >= clf.classes) throw FormatError(a.test + ": label " + std::to_string(y) +
                                            " never seen in training");
  }
  const double acc_train = eval::accuracy(clf, xtr, ytr);
  const double acc_test = eval::accuracy(clf, xte, yte);

  RunManifest man = manifest_for("eval-transfer", a.m, l);
  man.datasets["train"] = a.train;
  man.datasets["test"] = a.test;
  man.outputs["report"] = a.report;
  Json r;
  r["manifest"] = man.to_json();
  r["tp"] = resolved_json(l);
  r["probe"] = Json{{"model", "multinomial logistic regression, full-batch gradient descent"},
                    {"features", "z-scored with training statistics"},
                    {"l2", a.opt.l2},
                    {"epochs", a.opt.epochs},
                    {"lr", a.opt.lr},
                    {"classes", clf.classes},
                    {"final_loss", clf.loss_history.back()}};
  r["accuracy_train"] = acc_train;
  r["accuracy"] = acc_test;
  write_artifact(a.report, pretty(r));
  std::cerr << "transfer accuracy: " << fixed2(acc_test) << " (train " << fixed2(acc_train)
            << ")\n";
  return 0;
}

}  // namespace tokprep::cli
