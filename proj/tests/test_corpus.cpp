#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "plmrec/corpus.hpp"

using namespace plmrec;
using namespace plmrec::corpus;

namespace {

using Tokens = std::vector<std::string>;

ProfileOptions opts(std::size_t n, std::size_t min_len = 2) {
  ProfileOptions o;
  o.top_n = n;
  o.min_token_length = min_len;
  return o;
}

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("RED HEART T-LIGHT HOLDER"), (Tokens{"red", "heart", "t", "light", "holder"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("caf\xC3\xA9\xE2\x80\x94" "bag"), (Tokens{"caf\xC3\xA9", "bag"}));
}

TEST(Tokenize, MinLengthFilterDropsSingleLetters) {
  const auto p = build_profile("x", {"RED HEART T-LIGHT HOLDER"}, {}, opts(10));
  EXPECT_EQ(p.frequencies.size(), 4u);
  EXPECT_FALSE(p.frequencies.contains("t"));
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
  std::mt19937 gen(2);
  const std::string alphabet = "abcXYZ019 -,./\xC3\xA9";
  for (int i = 0; i < 300; ++i) {
    std::string s;
    for (int j = 0; j < 30; ++j) s += alphabet[gen() % alphabet.size()];
    const auto once = tokenize(s);
    std::string joined;
    for (const auto& t : once) joined += (joined.empty() ? "" : " ") + t;
    EXPECT_EQ(tokenize(joined), once);
  }
}

TEST(Truncate, CountsCodePoints) {
  EXPECT_EQ(truncate_chars("abcdef", 3), "abc");
  EXPECT_EQ(truncate_chars("\xC3\xA9\xC3\xA9\xC3\xA9", 2), "\xC3\xA9\xC3\xA9");
  EXPECT_EQ(truncate_chars("ab", 50), "ab");
}

TEST(Profile, TopListWithAndWithoutStopwords) {
  EXPECT_EQ(build_profile("t", {"a b b c c c"}, {}, opts(2, 1)).top, (Tokens{"c", "b"}));
  EXPECT_EQ(build_profile("t", {"a b b c c c"}, {"c"}, opts(2, 1)).top, (Tokens{"b", "a"}));
}

TEST(Profile, TiesBreakLexicographically) {
  EXPECT_EQ(build_profile("t", {"pear fig apple fig apple pear kiwi"}, {}, opts(4)).top,
            (Tokens{"apple", "fig", "pear", "kiwi"}));
}

TEST(Profile, EmptyCorpusAndEmptyAfterFilteringAreCorpusErrors) {
  EXPECT_EQ(error_kind([] { build_profile("t", {}, {}, opts(5)); }), ErrorKind::corpus);
  EXPECT_EQ(error_kind([] { build_profile("t", {"the and of"}, default_stopwords(), opts(5)); }),
            ErrorKind::corpus);
}

TEST(Profile, CharLimitTruncatesBeforeTokenizing) {
  ProfileOptions o = opts(10);
  o.char_limit = 9;
  const auto p = build_profile("t", {"lantern holder"}, {}, o);
  EXPECT_EQ(p.top, (Tokens{"lantern"}));
}

TEST(Overlap, Examples) {
  const auto a = build_profile("a", {"alpha beta gamma delta"}, {}, opts(4));
  const auto b = build_profile("b", {"alpha zeta theta iota"}, {}, opts(4));
  const auto c = build_profile("c", {"kappa lambda sigma omega"}, {}, opts(4));
  const auto m = overlap_matrix({a, a, b, c});
  EXPECT_DOUBLE_EQ(m[0][1], 100.0);
  EXPECT_DOUBLE_EQ(m[0][2], 25.0);
  EXPECT_DOUBLE_EQ(m[0][3], 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(m[i][i], 100.0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(m[i][j], m[j][i]);
      EXPECT_GE(m[i][j], 0.0);
      EXPECT_LE(m[i][j], 100.0);
    }
  }
}

TEST(Overlap, Errors) {
  const auto a = build_profile("a", {"alpha beta"}, {}, opts(4));
  const auto b = build_profile("b", {"alpha beta"}, {}, opts(3));
  EXPECT_EQ(error_kind([&] { overlap_matrix({a}); }), ErrorKind::precondition);
  EXPECT_EQ(error_kind([&] { overlap_matrix({a, b}); }), ErrorKind::precondition);
}

TEST(Stopwords, ShippedFileMatchesBuiltInList) {
  std::ifstream in(std::string(PLMREC_SOURCE_DIR) + "/data/stopwords_en.txt");
  ASSERT_TRUE(in);
  std::set<std::string> file;
  for (std::string w; std::getline(in, w);)
    if (!w.empty()) file.insert(w);
  EXPECT_EQ(file, default_stopwords());
}
