#include "forge/reward.hpp"

#include <cctype>
#include <cmath>

namespace forge::reward {
namespace {

constexpr std::string_view kOpen = "<think>";
constexpr std::string_view kClose = "</think>";
constexpr std::string_view kBox = "\\boxed{";

struct BoxSpan {
  std::size_t start;      // position of the backslash
  std::size_t content;    // first byte of the content
  std::size_t end;        // position of the matching '}'
};

// All balanced \boxed{...} spans in order of appearance.
std::vector<BoxSpan> find_boxes(std::string_view text) {
  std::vector<BoxSpan> boxes;
  std::size_t pos = 0;
  while ((pos = text.find(kBox, pos)) != std::string_view::npos) {
    std::size_t i = pos + kBox.size();
    int depth = 1;
    for (; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) break;
    }
    if (depth != 0) break;  // unterminated
    boxes.push_back({pos, pos + kBox.size(), i});
    pos = i + 1;
  }
  return boxes;
}

bool is_quote_or_space(std::string_view s, std::size_t i, std::size_t& width) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c == '"' || c == '\'' || c == '`' || std::isspace(c)) {
    width = 1;
    return true;
  }
  // U+2018..U+201D curly quotes: E2 80 98..9D
  if (c == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x80) {
    unsigned char d = static_cast<unsigned char>(s[i + 2]);
    if (d >= 0x98 && d <= 0x9D) {
      width = 3;
      return true;
    }
  }
  return false;
}

}  // namespace

std::optional<Verdict> normalize_verdict(std::string_view boxed) {
  std::size_t b = 0, e = boxed.size(), w = 0;
  while (b < e && is_quote_or_space(boxed, b, w)) b += w;
  // Trailing side: step back over quotes (1 or 3 bytes) and whitespace.
  while (e > b) {
    if (is_quote_or_space(boxed, e - 1, w) && w == 1) {
      --e;
    } else if (e >= b + 3 && is_quote_or_space(boxed, e - 3, w) && w == 3) {
      e -= 3;
    } else {
      break;
    }
  }
  auto l = to_lower(boxed.substr(b, e - b));
  if (l == "prohibited") return Verdict::kProhibited;
  if (l == "permitted") return Verdict::kPermitted;
  return std::nullopt;
}

ParsedResponse parse_response(std::string_view text) {
  ParsedResponse p;
  std::size_t body_start = 0;
  auto open = text.find(kOpen);
  if (open != std::string_view::npos) {
    auto close = text.find(kClose, open + kOpen.size());
    if (close != std::string_view::npos) {
      p.leading_text = std::string(text.substr(0, open));
      p.think_chain = std::string(text.substr(open + kOpen.size(), close - open - kOpen.size()));
      body_start = close + kClose.size();
    }
  }
  p.body = std::string(text.substr(body_start));

  auto boxes = find_boxes(text);
  if (!boxes.empty()) {
    const auto& last = boxes.back();
    p.boxed_raw = std::string(text.substr(last.content, last.end - last.content));
    p.verdict = normalize_verdict(*p.boxed_raw);
    p.trailing_text = std::string(text.substr(last.end + 1));
    p.box_in_body = p.think_chain.has_value() && last.start >= body_start;
    if (boxes.size() > 1) p.lint.push_back("multiple boxes; the last one is used");
    if (!is_blank(p.trailing_text)) p.lint.push_back("text after the final box");
    if (p.boxed_raw && !p.verdict) p.lint.push_back("unrecognized label in box");
  }
  return p;
}

std::string ParsedResponse::serialize() const {
  if (!think_chain) return body;
  return leading_text + std::string(kOpen) + *think_chain + std::string(kClose) + body;
}

int check_format(const ParsedResponse& parsed) {
  if (!parsed.think_chain || is_blank(*parsed.think_chain)) return 0;
  if (!is_blank(parsed.leading_text)) return 0;
  if (is_blank(parsed.body)) return 0;
  if (!parsed.verdict || !parsed.box_in_body) return 0;
  return 1;
}

int compliance_reward(const ParsedResponse& parsed, Verdict gold) {
  return parsed.verdict && *parsed.verdict == gold ? 1 : 0;
}

void RewardConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite non-negative number");
}

RewardBreakdown total_reward(std::string_view response, Verdict gold, const RewardConfig& config) {
  config.validate();
  auto parsed = parse_response(response);
  RewardBreakdown r;
  r.format_reward = check_format(parsed);
  r.comply_reward = compliance_reward(parsed, gold);
  r.total = r.format_reward * (r.comply_reward + config.alpha);
  return r;
}

Json RewardBreakdown::to_json() const {
  return Json{{"format_reward", format_reward}, {"comply_reward", comply_reward}, {"total", total}};
}

}  // namespace forge::reward
