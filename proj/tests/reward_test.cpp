#include <gtest/gtest.h>

#include <random>

#include "forge/reward.hpp"

namespace forge::reward {
namespace {

constexpr double kAlpha = 1.0 / 9.0;

const std::string kWellFormedProhibited =
    "<think>\nThe system performs real-time biometric identification in a public space.\n</think>\n"
    "The deployment falls under the prohibition.\n\\boxed{\"prohibited\"}";

TEST(ParseResponse, ThinkBodyAndQuotedVerdict) {
  auto p = parse_response("<think>A</think> B \\boxed{\"prohibited\"}");
  ASSERT_TRUE(p.think_chain);
  EXPECT_EQ(*p.think_chain, "A");
  EXPECT_NE(p.body.find('B'), std::string::npos);
  EXPECT_EQ(p.verdict, Verdict::kProhibited);
  EXPECT_EQ(p.boxed_raw, "\"prohibited\"");
}

TEST(ParseResponse, AbsentStructure) {
  auto p = parse_response("just some prose about the case");
  EXPECT_FALSE(p.think_chain);
  EXPECT_FALSE(p.boxed_raw);
  EXPECT_FALSE(p.verdict);
}

// Oracle: scan every box occurrence independently and take the last label.
TEST(ParseResponse, LastBoxWins) {
  const std::string text = "<think>x</think> first \\boxed{prohibited} then \\boxed{permitted}";
  std::string last;
  for (std::size_t pos = 0; (pos = text.find("\\boxed{", pos)) != std::string::npos; ++pos)
    last = text.substr(pos + 7, text.find('}', pos) - pos - 7);
  ASSERT_EQ(last, "permitted");
  auto p = parse_response(text);
  EXPECT_EQ(p.boxed_raw, last);
  EXPECT_EQ(p.verdict, Verdict::kPermitted);
  EXPECT_FALSE(p.lint.empty());
}

TEST(ParseResponse, CaseAndQuoteTolerance) {
  EXPECT_EQ(normalize_verdict("  'Permitted' "), Verdict::kPermitted);
  EXPECT_EQ(normalize_verdict("PROHIBITED"), Verdict::kProhibited);
  EXPECT_EQ(normalize_verdict("\xE2\x80\x9Cprohibited\xE2\x80\x9D"), Verdict::kProhibited);
  EXPECT_EQ(normalize_verdict("forbidden"), std::nullopt);
  EXPECT_EQ(normalize_verdict("prohibited or permitted"), std::nullopt);
}

TEST(CheckFormat, WellFormed) { EXPECT_EQ(check_format(parse_response(kWellFormedProhibited)), 1); }

TEST(CheckFormat, MissingThinkTags) {
  EXPECT_EQ(check_format(parse_response("Reasoning here. \\boxed{prohibited}")), 0);
}

TEST(CheckFormat, UnrecognizedLabel) {
  EXPECT_EQ(check_format(parse_response("<think>r</think> body \\boxed{forbidden}")), 0);
}

TEST(CheckFormat, ContentBeforeThinkInvalidates) {
  EXPECT_EQ(check_format(parse_response("Sure! <think>r</think> body \\boxed{permitted}")), 0);
  EXPECT_EQ(check_format(parse_response("\n  <think>r</think> body \\boxed{permitted}")), 1);
}

TEST(CheckFormat, EmptyThinkChainInvalid) {
  EXPECT_EQ(check_format(parse_response("<think></think> body \\boxed{permitted}")), 0);
  EXPECT_EQ(check_format(parse_response("<think>  \n </think> body \\boxed{permitted}")), 0);
}

TEST(CheckFormat, BoxOnlyInsideThinkIsInvalid) {
  EXPECT_EQ(check_format(parse_response("<think>\\boxed{permitted}</think> body")), 0);
}

TEST(CheckFormat, TrailingTextIsLintOnly) {
  auto p = parse_response("<think>r</think> body \\boxed{permitted} and more words");
  EXPECT_EQ(check_format(p), 1);
  ASSERT_FALSE(p.lint.empty());
  auto clean = parse_response("<think>r</think> body \\boxed{permitted}\n\n");
  EXPECT_TRUE(clean.lint.empty());
}

TEST(ComplianceReward, Indicator) {
  auto prohibited = parse_response("<think>r</think> b \\boxed{prohibited}");
  auto permitted = parse_response("<think>r</think> b \\boxed{permitted}");
  EXPECT_EQ(compliance_reward(prohibited, Verdict::kProhibited), 1);
  EXPECT_EQ(compliance_reward(permitted, Verdict::kProhibited), 0);
  EXPECT_EQ(compliance_reward(parse_response("no verdict"), Verdict::kPermitted), 0);
}

TEST(TotalReward, CanonicalFixtures) {
  auto good = total_reward(kWellFormedProhibited, Verdict::kProhibited, {kAlpha});
  EXPECT_NEAR(good.total, 10.0 / 9.0, 1e-12);
  auto wrong = total_reward(kWellFormedProhibited, Verdict::kPermitted, {kAlpha});
  EXPECT_NEAR(wrong.total, 1.0 / 9.0, 1e-12);
  auto malformed = total_reward("The answer is prohibited. \\boxed{prohibited}", Verdict::kProhibited, {kAlpha});
  EXPECT_EQ(malformed.total, 0.0);
  EXPECT_EQ(malformed.format_reward, 0);
}

TEST(TotalReward, NegativeAlphaRejected) {
  EXPECT_THROW(total_reward(kWellFormedProhibited, Verdict::kProhibited, {-0.5}), ConfigError);
}

// Random responses assembled from structural fragments.
TEST(RewardProperties, RangeMonotonicityIdempotence) {
  static const std::vector<std::string> kFragments = {
      "<think>", "</think>", "reasoning ", "\\boxed{prohibited}", "\\boxed{permitted}", "\\boxed{\"Permitted\"}",
      "\\boxed{maybe}", "body text ", "\n", "{", "}", "prohibited ", "Sure. "};
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    int n = std::uniform_int_distribution<int>(0, 9)(rng);
    for (int i = 0; i < n; ++i) s += kFragments[rng() % kFragments.size()];
    for (auto gold : {Verdict::kProhibited, Verdict::kPermitted}) {
      auto r = total_reward(s, gold, {kAlpha});
      bool in_range = r.total == 0.0 || std::abs(r.total - kAlpha) < 1e-15 || std::abs(r.total - 1 - kAlpha) < 1e-15;
      EXPECT_TRUE(in_range) << s;
    }
    auto p = parse_response(s);
    if (check_format(p) == 1) {
      auto a = total_reward(s, Verdict::kProhibited, {kAlpha}).total;
      auto b = total_reward(s, Verdict::kPermitted, {kAlpha}).total;
      EXPECT_NEAR(std::abs(a - b), 1.0, 1e-15) << s;
      // Label decided by the box only.
      auto expected = *p.verdict == Verdict::kProhibited ? a : b;
      EXPECT_NEAR(expected, 1.0 + kAlpha, 1e-15);
    }
    auto again = parse_response(p.serialize());
    EXPECT_EQ(again.think_chain, p.think_chain) << s;
    EXPECT_EQ(again.body, p.body) << s;
    EXPECT_EQ(again.boxed_raw, p.boxed_raw) << s;
    EXPECT_EQ(again.verdict, p.verdict) << s;
  }
}

}  // namespace
}  // namespace forge::reward
