#pragma once

// Third-party safety data: ingestion into one schema, chapter allocation and
// extrapolation into compliance cases.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/client.hpp"
#include "forge/common.hpp"
#include "forge/eval.hpp"

namespace forge::extrapolation {

class SafetySource {
 public:
  enum class Kind { kAegis2, kWildGuard, kOpenAiMod, kSafeRlhf, kCustom };

  static SafetySource from_string(std::string_view s);  // "aegis2", "wildguard", "openai_mod", "saferlhf", other -> custom
  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  friend bool operator==(const SafetySource&, const SafetySource&) = default;

 private:
  SafetySource(Kind k, std::string n) : kind_(k), name_(std::move(n)) {}
  Kind kind_;
  std::string name_;
};

enum class SafetyTask { kPromptSafety, kResponseSafety };
enum class SafetyLabel { kSafe, kUnsafe };

std::string_view to_string(SafetyTask t) noexcept;   // "PROMPT_SAFETY" / "RESPONSE_SAFETY"
std::string_view to_string(SafetyLabel l) noexcept;  // "SAFE" / "UNSAFE"
SafetyLabel safety_label_from_string(std::string_view s);

struct ExternalSafetyItem {
  std::string item_ref;  // "<source>:<id or row number>"
  SafetySource source = SafetySource::from_string("custom");
  SafetyTask task = SafetyTask::kPromptSafety;
  std::string text;  // prompt, or "PROMPT: ...\nRESPONSE: ..." for response safety
  SafetyLabel label = SafetyLabel::kSafe;
  std::optional<std::string> category;

  Json to_json() const;
  static ExternalSafetyItem from_json(const Json& j);
};

// How the columns of one source file map onto ExternalSafetyItem.
struct IngestMapping {
  enum class Format { kAuto, kJsonl, kCsv };
  Format format = Format::kAuto;
  SafetyTask task = SafetyTask::kPromptSafety;
  std::string text_field = "prompt";
  std::string response_field;  // required for response safety
  std::string label_field = "label";
  std::string id_field;        // optional; row number otherwise
  std::string category_field;  // optional
  // Raw label value (lowercased, trimmed) -> normalized label.
  std::map<std::string, SafetyLabel> label_map{{"safe", SafetyLabel::kSafe}, {"unsafe", SafetyLabel::kUnsafe}};

  // {"format", "task", "text", "response", "label", "id", "category", "labels": {raw: "SAFE"|"UNSAFE"}}
  static IngestMapping from_json(const Json& j);
  Json to_json() const;
};

// Column layout of the public test files of the four known sources.
IngestMapping default_mapping(const SafetySource& source);

struct IngestResult {
  std::vector<ExternalSafetyItem> items;
  std::vector<Json> rejects;  // {"row", "reason"}
  std::size_t rows_read = 0;  // == items + rejects
};

// Rows without text are rejected and logged; any label value missing from the
// label map aborts ingestion with a ValidationError listing every such value.
IngestResult ingest_safety_dataset(const std::string& path, const SafetySource& source, const IngestMapping& mapping);

// RFC 4180: quoted fields, doubled quotes, embedded separators and newlines,
// CRLF or LF records. The first record is the header.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// --- allocation --------------------------------------------------------------------

struct AllocationResult {
  std::string item_ref;
  Framework framework = Framework::eu_ai_act();
  std::optional<std::string> chapter_id;
  std::string raw_response;

  Json to_json() const;
  static AllocationResult from_json(const Json& j);
};

// Content of the last boxed{...} (backslash optional); a {"result": "..."}
// payload is unwrapped. nullopt when there is no box.
std::optional<std::string> extract_boxed_answer(std::string_view raw);

// Boxed answer fuzzy-matched onto the canonical chapters.
std::optional<std::string> parse_allocation(std::string_view raw, const Framework& fw);

std::string allocation_prompt(const ExternalSafetyItem& item, const Framework& fw);

AllocationResult allocate_chapter(const ExternalSafetyItem& item, const Framework& fw, const ChatClient& client);
std::vector<AllocationResult> allocate_batch(std::span<const ExternalSafetyItem> items, const Framework& fw,
                                             const ClientConfig& config);

// Same counting as eval::chapter_distribution.
eval::DistributionReport allocation_distribution(std::span<const AllocationResult> results, const Framework& fw);

// --- extrapolation -----------------------------------------------------------------

struct LabelPolicy {
  Verdict for_unsafe = Verdict::kProhibited;
  Verdict for_safe = Verdict::kPermitted;
  Verdict map(SafetyLabel l) const { return l == SafetyLabel::kUnsafe ? for_unsafe : for_safe; }
};

struct ExtrapolatedCase {
  std::string item_ref;
  Framework framework = Framework::eu_ai_act();
  Verdict label = Verdict::kProhibited;
  std::string factual_background;
  std::string legal_analysis;

  Json to_json() const;
};

struct Sections {
  std::string factual_background;
  std::string legal_analysis;
};

// Splits a markdown answer into the "Factual Background" and "Legal Analyzing"
// (or "Legal Analysis") sections. Throws ParseError naming what is missing.
Sections parse_case_sections(std::string_view raw);

std::string extrapolation_prompt(const ExternalSafetyItem& item, const Framework& fw, Verdict label);

ExtrapolatedCase extrapolate_case(const ExternalSafetyItem& item, const Framework& fw, Verdict label,
                                  const ChatClient& client);

struct ExtrapolationBatch {
  std::vector<ExtrapolatedCase> cases;
  std::vector<Json> rejects;  // {"item_ref", "error", "raw_response"}
};

// `forced` overrides the policy for every item.
ExtrapolationBatch extrapolate_batch(std::span<const ExternalSafetyItem> items, const Framework& fw,
                                     const LabelPolicy& policy, std::optional<Verdict> forced,
                                     const ClientConfig& config);

}  // namespace forge::extrapolation
