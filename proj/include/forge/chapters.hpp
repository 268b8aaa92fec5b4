#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/common.hpp"

namespace forge {

struct Chapter {
  std::string id;         // "eu-ai-act/ch12"
  int number = 0;         // 12
  std::string heading;    // "Chapter XII"
  std::string title;      // "Penalties"
  std::string full_name;  // "Chapter XII: Penalties"
};

// Bundled chapter inventories. Throws ConfigError for custom frameworks.
const std::vector<Chapter>& canonical_chapters(const Framework& fw);
bool has_canonical_chapters(const Framework& fw);

std::optional<Chapter> find_chapter(const Framework& fw, std::string_view chapter_id);

// Roman numeral helpers ("XII" <-> 12). roman_to_int returns nullopt on
// anything that is not a well-formed numeral.
std::optional<int> roman_to_int(std::string_view roman);
std::string int_to_roman(int n);

// Fuzzy match of a model answer ("chapter 12 - penalties", "Chapter XII") onto
// the canonical list. Case-insensitive, punctuation-tolerant, and numeral-style
// agnostic. An answer whose number exists but whose title names a different
// chapter is rejected.
std::optional<Chapter> match_chapter(const Framework& fw, std::string_view answer);

// "eu-ai-act/ch2/art5/p1" -> "eu-ai-act/ch2"; nullopt when no chapter segment.
std::optional<std::string> chapter_of_node(std::string_view node_id);

}  // namespace forge
