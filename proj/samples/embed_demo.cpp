// Minimal library use: a seeded toy model, a BPE vocabulary trained on a few
// lines, and the same sentence pairs embedded with and without prepending.

#include <iomanip>
#include <iostream>

#include "tokprep/tokprep.hpp"

int main() {
  using namespace tokprep;

  ModelConfig cfg;  // L=16, d=128
  cfg.seed = 7;
  const Model model(cfg);

  const std::vector<std::string> corpus = {
      "The small cat crossed the bridge slowly.",
      "A small kitten walked over the bridge.",
      "The old train left the station at dawn.",
      "This sentence : \"x\" means in one word: \"",
  };
  const Vocab vocab = train_bpe(corpus, 600);
  const PromptTemplate& tmpl = *find_builtin_template("prompteol");

  TPConfig tp;  // one placeholder, default layer scope
  TPConfig off = tp;
  off.enabled = false;
  off.exit_layer = resolve(tp, cfg.n_layers).exit_layer;  // compare at the same layer

  const Extractor with_tp(model, vocab, tmpl, tp);
  const Extractor without(model, vocab, tmpl, off);
  const auto& r = with_tp.resolved();
  std::cout << "placeholder rewritten before layers 2.." << r.end_layer << ", readout at layer "
            << r.exit_layer << "\n";

  const std::pair<const char*, const char*> pairs[] = {
      {"The small cat crossed the bridge slowly.", "A small kitten walked over the bridge."},
      {"The small cat crossed the bridge slowly.", "The old train left the station at dawn."},
  };
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [a, b] : pairs) {
    const double c_tp = eval::cosine(with_tp.embed(a).values, with_tp.embed(b).values);
    const double c_off = eval::cosine(without.embed(a).values, without.embed(b).values);
    std::cout << "cos tp " << c_tp << "  vanilla " << c_off << "  | " << a << " / " << b << "\n";
  }
}
