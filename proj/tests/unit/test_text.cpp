#include <gtest/gtest.h>

#include "aquilt/text.hpp"

using namespace aquilt::text;

TEST(Text, TrimAndNormalize) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(trim(""), "");
  EXPECT_EQ(normalize_whitespace("  a \t\n b   c "), "a b c");
  EXPECT_TRUE(is_blank(" \t\r\n"));
  EXPECT_FALSE(is_blank(" x "));
}

TEST(Text, CaseInsensitiveContains) {
  EXPECT_TRUE(contains_ci("According to THE TEXT above", "the text"));
  EXPECT_FALSE(contains_ci("context", "the text"));
  EXPECT_TRUE(contains_ci("根据上文", "上文"));
}

TEST(Text, Utf8RoundTrip) {
  const std::string s = "a中文é!";
  std::string out;
  for (char32_t cp : decode_utf8(s)) append_utf8(out, cp);
  EXPECT_EQ(out, s);
  EXPECT_EQ(decode_utf8(s).size(), 5u);
}

TEST(Text, InvalidUtf8DecodesAsReplacement) {
  const auto cps = decode_utf8("a\xff" "b");
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[1], U'�');
}

TEST(Text, CjkClassification) {
  EXPECT_TRUE(is_cjk(U'中'));
  EXPECT_FALSE(is_cjk(U'a'));
  EXPECT_TRUE(is_cjk_punct(U'，'));
  EXPECT_TRUE(is_cjk_punct(U'。'));
  EXPECT_FALSE(is_cjk_punct(U'中'));
}

TEST(Text, WordTokens) {
  EXPECT_EQ(word_tokens("Hello, World! it's"),
            (std::vector<std::string>{"hello", "world", "it", "s"}));
  EXPECT_EQ(word_tokens("水质报告。ok"), (std::vector<std::string>{"水", "质", "报", "告", "ok"}));
  EXPECT_TRUE(word_tokens(" ,.; ").empty());
}

TEST(Text, SplitLines) {
  EXPECT_EQ(split_lines("a\nb\r\n\nc\n"), (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_TRUE(split_lines("").empty());
  EXPECT_EQ(split_lines("x"), (std::vector<std::string>{"x"}));
}
