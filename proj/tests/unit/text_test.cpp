#include <gtest/gtest.h>

#include "dctl/text.hpp"

using namespace dctl;

TEST(Text, CanonicalizeCollapsesWhitespaceAndCase) {
  EXPECT_EQ(canonicalize("  Is  Tiramisu\tSAFE?\n"), "is tiramisu safe?");
  EXPECT_EQ(canonicalize(""), "");
}

TEST(Text, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, Utf8LengthCountsCodePoints) {
  EXPECT_EQ(utf8_length("abc"), 3u);
  EXPECT_EQ(utf8_length("caf\xc3\xa9"), 4u);
  EXPECT_EQ(utf8_length("\xe2\x82\xac" "1"), 2u);
}

TEST(Text, TokenizeLowercasesAndSplits) {
  EXPECT_EQ(tokenize("Hello, World-42!"), (std::vector<std::string>{"hello", "world", "42"}));
  EXPECT_TRUE(tokenize("  ,. ").empty());
}

TEST(Text, NumericLiterals) {
  EXPECT_EQ(numeric_literals("Tiramisu has 52 g carbs and 2.5 g salt, -3 left"),
            (std::vector<std::string>{"52", "2.5", "-3"}));
  EXPECT_TRUE(numeric_literals("no numbers here").empty());
}

TEST(Text, FormatAndParseNumbers) {
  EXPECT_EQ(format_number(40.0), "40");
  EXPECT_EQ(format_number(2.5), "2.5");
  EXPECT_EQ(format_number(-0.125), "-0.125");
  EXPECT_EQ(parse_number("2000"), 2000.0);
  EXPECT_EQ(parse_number(" 2.5 "), 2.5);
  EXPECT_FALSE(parse_number("two"));
}

TEST(Text, DisplayAndCanonicalValues) {
  EXPECT_EQ(display_value(json("bob")), "bob");
  EXPECT_EQ(display_value(json::array({"milk", "eggs"})), "milk, eggs");
  EXPECT_EQ(display_value(json(2000.0)), "2000");
  json c = canonical_value(json{{"a", 3.0}, {"b", "  x "}, {"c", json::array({1.5, 2.0})}});
  EXPECT_TRUE(c["a"].is_number_integer());
  EXPECT_EQ(c["b"], "x");
  EXPECT_TRUE(c["c"][1].is_number_integer());
  EXPECT_EQ(c["c"][0], 1.5);
}

TEST(Text, SubstitutePlaceholders) {
  std::vector<std::string> missing;
  json bound = substitute_placeholders(json{{"v", "${dish}"}, {"list", "${xs}"}, {"s", "dish ${dish}!"}},
                                       json{{"dish", "tiramisu"}, {"xs", json::array({1, 2})}}, missing);
  EXPECT_EQ(bound["v"], "tiramisu");
  EXPECT_EQ(bound["list"], json::array({1, 2}));
  EXPECT_EQ(bound["s"], "dish tiramisu!");
  EXPECT_TRUE(missing.empty());

  substitute_placeholders(json("${nope}"), json::object(), missing);
  EXPECT_EQ(missing, std::vector<std::string>{"nope"});
}

TEST(Text, KeySegmentAndFirstSentence) {
  EXPECT_EQ(key_segment("Pesto Pasta"), "pesto_pasta");
  EXPECT_EQ(key_segment("v1.2"), "v1_2");
  EXPECT_EQ(first_sentence("It is 2.5 km. Then more."), "It is 2.5 km.");
  EXPECT_EQ(first_sentence("No terminator"), "No terminator");
}
