#pragma once

// Shared fixtures: small models and a vocabulary trained on a fixed corpus.

#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "tokprep/tokprep.hpp"

namespace tokprep::testing {

inline ModelConfig tiny_config(std::uint64_t seed = 7) {
  ModelConfig c;
  c.n_layers = 4;
  c.n_heads = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.vocab_size = 512;
  c.n_reserved_pst = 4;
  c.seed = seed;
  return c;
}

inline ModelConfig toy_config(std::uint64_t seed = 7) {
  ModelConfig c;  // defaults: L=16, d=128, 4 heads, d_ff=512, vocab 2048
  c.seed = seed;
  return c;
}

inline std::vector<std::string> sample_corpus() {
  return {
      "The small cat crossed the bridge slowly.",
      "The large dog watched the river quickly.",
      "A quiet horse followed the road at night.",
      "The old train passed the station before dawn.",
      "This sentence : \"x\" means in one word: \"",
      "After thinking step by step , this sentence : \"x\" means in one word: \"",
      "The red car reached the market today.",
      "The young fox avoided the forest in the rain.",
      "The bright plane circled the harbor for hours.",
      "The strange owl entered the garden without noise.",
  };
}

inline const Vocab& sample_vocab() {
  static const Vocab v = train_bpe(sample_corpus(), 400);
  return v;
}

inline std::vector<std::string> sample_sentences() {
  return {
      "The small cat crossed the bridge slowly.",
      "A noisy truck left the village again.",
      "The tired wolf climbed the hill at night.",
      "The blue ferry approached the harbor.",
      "The famous eagle guarded the valley for hours.",
  };
}

// Random sentence from a word list; always at least three words.
inline std::string random_sentence(std::mt19937_64& rng) {
  static const char* kWords[] = {"the", "cat", "dog", "bridge", "river", "quickly", "slowly",
                                 "old", "red", "train", "crossed", "watched", "market",
                                 "night", "owl", "fox", "station", "today", "horse", "road"};
  std::uniform_int_distribution<int> len(3, 10), pick(0, 19);
  std::string s = "The";
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    s += ' ';
    s += kWords[pick(rng)];
  }
  s += '.';
  return s;
}

inline bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace tokprep::testing
