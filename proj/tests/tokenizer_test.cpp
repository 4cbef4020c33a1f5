#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <random>

#include "test_support.hpp"
#include "tokprep/tokenizer.hpp"

namespace tokprep {
namespace {

std::vector<std::pair<std::string, std::string>> merge_strings(const Vocab& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [l, r] : v.merges()) out.emplace_back(v.token(l), v.token(r));
  return out;
}

TEST(Bpe, GoldenVocabularyFile) {
  // Counts by hand: " b", "aa" and "bb" all occur twice; " b" wins the
  // string tie-break, then " b"+"b" (also twice), then "a"+"a".
  const Vocab v = train_bpe({"aa bb aa bb"}, 300);
  EXPECT_EQ(serialize_vocab(v), "bpe-vocab v1 259\n\\x20\tb\n\\x20b\tb\na\ta\n");
}

TEST(Bpe, StopsWhenNoPairRepeats) {
  const Vocab v = train_bpe({"aaaa"}, 257);
  ASSERT_EQ(v.size(), 257u);
  EXPECT_EQ(v.token(256), "aa");
  EXPECT_EQ(encode(v, "aaaa"), (std::vector<TokenId>{256, 256}));

  const Vocab w = train_bpe({"abab abab"}, 1000);
  EXPECT_EQ(merge_strings(w), (std::vector<std::pair<std::string, std::string>>{
                                  {"a", "b"}, {"ab", "ab"}}));
}

TEST(Bpe, TargetBelowByteAlphabetRejected) {
  EXPECT_THROW(train_bpe({"abc"}, 255), ConfigError);
  EXPECT_THROW(train_bpe({}, 300), ConfigError);
}

TEST(Bpe, TrainingIsDeterministic) {
  EXPECT_EQ(serialize_vocab(train_bpe(testing::sample_corpus(), 400)),
            serialize_vocab(testing::sample_vocab()));
}

TEST(Bpe, MergedStringsAreUnique) {
  const Vocab& v = testing::sample_vocab();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_TRUE(seen.insert(v.token(static_cast<TokenId>(i))).second) << v.token(i);
  }
}

TEST(Encode, EmptyTextHasNoTokens) {
  EXPECT_TRUE(encode(testing::sample_vocab(), "").empty());
}

TEST(Encode, RoundTripsRandomByteStrings) {
  const Vocab& v = testing::sample_vocab();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 64), byte(0, 255), ascii(0x20, 0x7e);
  std::bernoulli_distribution binary(0.3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    const bool raw = binary(rng);
    for (char& c : s) c = static_cast<char>(raw ? byte(rng) : ascii(rng));
    const auto ids = encode(v, s);
    for (TokenId id : ids) ASSERT_LT(id, v.size());
    ASSERT_EQ(decode(v, ids), s);
  }
}

TEST(Encode, UsesLearnedMerges) {
  const Vocab& v = testing::sample_vocab();
  const std::string s = "The small cat crossed the bridge slowly.";
  EXPECT_LT(encode(v, s).size(), s.size());
}

TEST(Decode, PlaceholderIdsAreReserved) {
  const Vocab& v = testing::sample_vocab();
  try {
    decode(v, {65, static_cast<TokenId>(v.size())});
    FAIL() << "expected TokenError";
  } catch (const TokenError& e) {
    EXPECT_NE(std::string(e.what()).find("<PST>"), std::string::npos);
  }
  // With placeholders based further up, an id between the two is unknown.
  EXPECT_THROW(decode(v, {static_cast<TokenId>(v.size())}, 2048), TokenError);
  EXPECT_THROW(decode(v, {2048}, 2048), TokenError);
}

TEST(VocabFile, SerializeParseRoundTrip) {
  const Vocab& v = testing::sample_vocab();
  const std::string text = serialize_vocab(v);
  const Vocab back = parse_vocab(text);
  EXPECT_EQ(serialize_vocab(back), text);
  EXPECT_EQ(back.size(), v.size());
}

TEST(VocabFile, EscapesNonPrintableBytes) {
  Vocab v;
  v.add_merge('\\', '\n');
  v.add_merge(0xff, 'x');
  const std::string text = serialize_vocab(v);
  EXPECT_EQ(text, "bpe-vocab v1 258\n\\x5c\t\\x0a\n\\xff\tx\n");
  EXPECT_EQ(parse_vocab(text).token(256), "\\\n");
  EXPECT_EQ(parse_vocab(text).token(257), "\xffx");
}

TEST(VocabFile, MalformedInputNamesTheLine) {
  EXPECT_THROW(parse_vocab(""), FormatError);
  EXPECT_THROW(parse_vocab("bpe-vocab v2 256\n"), FormatError);
  EXPECT_THROW(parse_vocab("bpe-vocab v1 257\n"), FormatError);  // count mismatch
  try {
    parse_vocab("bpe-vocab v1 258\na\tb\nab-no-tab\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_vocab("bpe-vocab v1 257\nzz\tb\n"), FormatError);  // unknown left token
  EXPECT_THROW(parse_vocab("bpe-vocab v1 257\n\\q1\tb\n"), FormatError);
  EXPECT_THROW(parse_vocab("bpe-vocab v1 258\na\tb\na\tb\n"), FormatError);  // duplicate
}

TEST(VocabFile, SaveLoad) {
  const auto path = std::filesystem::temp_directory_path() / "tokprep_vocab_test.txt";
  save_vocab(testing::sample_vocab(), path.string());
  EXPECT_EQ(serialize_vocab(load_vocab(path.string())), serialize_vocab(testing::sample_vocab()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_vocab(path.string()), FormatError);
}

}  // namespace
}  // namespace tokprep
