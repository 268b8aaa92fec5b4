#pragma once

// Rule-based reward for compliance verdicts:
//   total = R_format(o) * (R_comply(o | q) + alpha)
// where R_format checks the "<think>chain</think> body \boxed{label}" layout
// and R_comply is the indicator that the boxed label matches the gold label.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/common.hpp"

namespace forge::reward {

struct ParsedResponse {
  std::optional<std::string> think_chain;
  std::string body;                  // everything after </think> (whole text when absent)
  std::optional<std::string> boxed_raw;  // content of the last \boxed{...}
  std::optional<Verdict> verdict;

  std::string leading_text;   // text before <think>
  std::string trailing_text;  // text after the last box
  bool box_in_body = false;   // last box sits after </think>
  std::vector<std::string> lint;

  // Inverse of parse_response for the fields it extracts.
  std::string serialize() const;
};

struct RewardConfig {
  double alpha = 1.0 / 9.0;
  void validate() const;
};

struct RewardBreakdown {
  int format_reward = 0;
  int comply_reward = 0;
  double total = 0.0;

  Json to_json() const;
};

ParsedResponse parse_response(std::string_view text);

// Lowercases, strips quotes/whitespace and accepts exactly the two labels.
std::optional<Verdict> normalize_verdict(std::string_view boxed);

int check_format(const ParsedResponse& parsed);
int compliance_reward(const ParsedResponse& parsed, Verdict gold);
RewardBreakdown total_reward(std::string_view response, Verdict gold, const RewardConfig& config = {});

}  // namespace forge::reward
