#include "forge/chapters.hpp"

#include <array>
#include <algorithm>
#include <cctype>
#include <utility>

namespace forge {
namespace {

using Pair = std::pair<const char*, const char*>;

constexpr std::array<Pair, 13> kEuAiAct{{
    {"Chapter I", "General Provisions"},
    {"Chapter II", "Prohibited AI Practices"},
    {"Chapter III", "High-Risk AI System"},
    {"Chapter IV", "Transparency Obligations for Providers and Deployers of Certain AI Systems"},
    {"Chapter V", "General-Purpose AI Models"},
    {"Chapter VI", "Measures in Support of Innovation"},
    {"Chapter VII", "Governance"},
    {"Chapter VIII", "EU Database for High-Risk AI Systems"},
    {"Chapter IX", "Post-Market Monitoring, Information Sharing and Market Surveillance"},
    {"Chapter X", "Codes of Conduct and Guidelines"},
    {"Chapter XI", "Delegation of Power and Committee Procedure"},
    {"Chapter XII", "Penalties"},
    {"Chapter XIII", "Final Provisions"},
}};

constexpr std::array<Pair, 11> kGdpr{{
    {"Chapter 1", "General provisions"},
    {"Chapter 2", "Principles"},
    {"Chapter 3", "Rights of the data subject"},
    {"Chapter 4", "Controller and processor"},
    {"Chapter 5", "Transfers of personal data to third countries or international organisations"},
    {"Chapter 6", "Independent supervisory authorities"},
    {"Chapter 7", "Cooperation and consistency"},
    {"Chapter 8", "Remedies, liability and penalties"},
    {"Chapter 9", "Provisions relating to specific processing situations"},
    {"Chapter 10", "Delegated acts and implementing acts"},
    {"Chapter 11", "Final provisions"},
}};

template <std::size_t N>
std::vector<Chapter> build(const std::string& slug, const std::array<Pair, N>& src) {
  std::vector<Chapter> out;
  int n = 0;
  for (const auto& [heading, title] : src) {
    ++n;
    out.push_back(Chapter{slug + "/ch" + std::to_string(n), n, heading, title,
                          std::string(heading) + ": " + title});
  }
  return out;
}

// Lowercase, punctuation folded to spaces, roman numeral after "chapter"
// rewritten to arabic.
std::string normalize(std::string_view s) {
  std::string flat;
  for (unsigned char c : s) flat.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : ' ');
  std::vector<std::string> words;
  std::string w;
  for (char c : flat) {
    if (c == ' ') {
      if (!w.empty()) words.push_back(std::exchange(w, {}));
    } else {
      w.push_back(c);
    }
  }
  if (!w.empty()) words.push_back(w);
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string word = words[i];
    if (i > 0 && words[i - 1] == "chapter") {
      std::string upper;
      for (char c : word) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (auto r = roman_to_int(upper)) word = std::to_string(*r);
    }
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

}  // namespace

const std::vector<Chapter>& canonical_chapters(const Framework& fw) {
  static const auto eu = build("eu-ai-act", kEuAiAct);
  static const auto gdpr = build("gdpr", kGdpr);
  switch (fw.kind()) {
    case Framework::Kind::kEuAiAct:
      return eu;
    case Framework::Kind::kGdpr:
      return gdpr;
    case Framework::Kind::kCustom:
      break;
  }
  throw ConfigError("no canonical chapter list for framework '" + fw.slug() + "'");
}

bool has_canonical_chapters(const Framework& fw) { return fw.kind() != Framework::Kind::kCustom; }

std::optional<Chapter> find_chapter(const Framework& fw, std::string_view chapter_id) {
  if (!has_canonical_chapters(fw)) return std::nullopt;
  for (const auto& c : canonical_chapters(fw))
    if (c.id == chapter_id) return c;
  return std::nullopt;
}

std::optional<int> roman_to_int(std::string_view roman) {
  if (roman.empty() || roman.size() > 15) return std::nullopt;
  auto value = [](char c) -> int {
    switch (c) {
      case 'I': return 1;
      case 'V': return 5;
      case 'X': return 10;
      case 'L': return 50;
      case 'C': return 100;
      case 'D': return 500;
      case 'M': return 1000;
      default: return 0;
    }
  };
  int total = 0;
  for (std::size_t i = 0; i < roman.size(); ++i) {
    int v = value(roman[i]);
    if (v == 0) return std::nullopt;
    int next = i + 1 < roman.size() ? value(roman[i + 1]) : 0;
    total += (v < next) ? -v : v;
  }
  // Reject non-canonical spellings such as "IIII" or "VX".
  if (total <= 0 || int_to_roman(total) != roman) return std::nullopt;
  return total;
}

std::string int_to_roman(int n) {
  static constexpr std::array<std::pair<int, const char*>, 13> kTable{{{1000, "M"},
                                                                       {900, "CM"},
                                                                       {500, "D"},
                                                                       {400, "CD"},
                                                                       {100, "C"},
                                                                       {90, "XC"},
                                                                       {50, "L"},
                                                                       {40, "XL"},
                                                                       {10, "X"},
                                                                       {9, "IX"},
                                                                       {5, "V"},
                                                                       {4, "IV"},
                                                                       {1, "I"}}};
  std::string out;
  for (const auto& [v, s] : kTable) {
    while (n >= v) {
      out += s;
      n -= v;
    }
  }
  return out;
}

std::optional<Chapter> match_chapter(const Framework& fw, std::string_view answer) {
  if (!has_canonical_chapters(fw)) return std::nullopt;
  const auto norm = normalize(answer);
  if (norm.empty()) return std::nullopt;
  const auto& chapters = canonical_chapters(fw);
  for (const auto& c : chapters)
    if (normalize(c.full_name) == norm) return c;

  // "chapter N" followed by an optional title.
  constexpr std::string_view kPrefix = "chapter ";
  if (norm.rfind(kPrefix, 0) == 0) {
    auto rest = norm.substr(kPrefix.size());
    auto space = rest.find(' ');
    auto num_part = rest.substr(0, space);
    auto title_part = space == std::string::npos ? std::string() : rest.substr(space + 1);
    if (!num_part.empty() && std::all_of(num_part.begin(), num_part.end(), ::isdigit) && num_part.size() < 4) {
      int n = std::stoi(num_part);
      for (const auto& c : chapters) {
        if (c.number != n) continue;
        if (title_part.empty() || normalize(c.title) == title_part) return c;
        return std::nullopt;
      }
      return std::nullopt;
    }
  }
  // Bare title.
  for (const auto& c : chapters)
    if (normalize(c.title) == norm) return c;
  return std::nullopt;
}

std::optional<std::string> chapter_of_node(std::string_view node_id) {
  auto first = node_id.find('/');
  if (first == std::string_view::npos) return std::nullopt;
  auto second = node_id.find('/', first + 1);
  auto seg = node_id.substr(first + 1, second == std::string_view::npos ? std::string_view::npos
                                                                          : second - first - 1);
  if (seg.size() < 3 || seg.substr(0, 2) != "ch") return std::nullopt;
  return std::string(node_id.substr(0, second));
}

}  // namespace forge
