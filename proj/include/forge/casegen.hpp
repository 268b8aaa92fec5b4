#pragma once

// Prompt templates, case parsing and benchmark assembly.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/client.hpp"
#include "forge/common.hpp"
#include "forge/eval.hpp"
#include "forge/statute.hpp"

namespace forge::casegen {

enum class TemplateName { kBenchmarkGen, kColdStart, kExtrapolate, kAllocate, kJudge };

std::string_view to_string(TemplateName n) noexcept;  // "BENCHMARK_GEN", ...
TemplateName template_from_string(std::string_view s);

struct PromptTemplate {
  TemplateName name = TemplateName::kBenchmarkGen;
  std::string body;

  // Slot names referenced as {name} in the body, sorted and unique.
  std::vector<std::string> slots() const;
};

const PromptTemplate& builtin_template(TemplateName name);

using Bindings = std::map<std::string, std::string>;

// Every referenced slot must be bound and every binding must be referenced;
// violations throw TemplateError naming the slot.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

// Bindings for the built-in templates.
Bindings benchmark_bindings(const statute::Seed& seed, Verdict label);
Bindings cold_start_bindings(const Framework& fw, const std::string& regulations, const std::string& case_text,
                             Verdict label);
Bindings allocate_bindings(const Framework& fw, const std::string& case_text);
Bindings extrapolate_bindings(const Framework& fw, const std::string& seed_text, Verdict label);
Bindings judge_bindings(const Framework& fw, const std::string& case_text);

// One line per canonical chapter: "Chapter I: General Provisions", ...
std::string chapter_list(const Framework& fw);

// --- cases ----------------------------------------------------------------------

inline constexpr const char* kCaseFields[5] = {"parties_involved", "factual_background", "legal_issues", "arguments",
                                               "jurisdiction"};

struct CaseRecord {
  std::string case_id;
  Framework framework = Framework::eu_ai_act();
  std::string seed_id;
  Verdict label = Verdict::kProhibited;
  std::string parties_involved;
  std::string factual_background;
  std::string legal_issues;
  std::string arguments;
  std::string jurisdiction;
  std::string generator;
  std::string created_at;

  // sha256 over seed id, label and the five narrative fields.
  std::string compute_id() const;
  // Chapter the seed belongs to ("eu-ai-act/ch2"), empty when unknown.
  std::string chapter_id() const;
  const std::string& field(std::string_view name) const;
  Json narrative_json() const;  // just the five fields
  Json to_json() const;
  static CaseRecord from_json(const Json& j);
};

// Tolerant extraction: code fences and surrounding prose are stripped, then
// the object must hold exactly the five fields as non-empty strings.
// ValidationError::offending() lists the bad keys.
CaseRecord parse_case_json(std::string_view raw, const Framework& fw, const std::string& seed_id, Verdict label,
                           const std::string& generator = "");

enum class Split { kTrain, kTest };
std::string_view to_string(Split s) noexcept;  // "TRAIN" / "TEST"

struct Dataset {
  std::vector<CaseRecord> records;
  std::map<std::string, Split> split_assignment;
  std::uint64_t rng_seed = 0;
  Json metadata = Json::object();
};

Dataset read_dataset(const std::string& path);
void write_dataset(const std::string& path, const Dataset& ds);
// Sibling manifest {case_id: "TRAIN"|"TEST"}.
Json split_manifest(const Dataset& ds);
void apply_split_manifest(Dataset& ds, const Json& manifest);
std::string split_manifest_path(const std::string& dataset_path);

struct BuildOptions {
  int max_attempts = 4;  // first try plus three retries with fresh sampling
  std::string rejects_path;  // JSON Lines; empty = keep in memory only
  std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct BuildResult {
  Dataset dataset;
  std::vector<Json> rejects;  // one entry per failed attempt
  std::size_t requested = 0;  // 2 * seeds
  std::size_t failed_jobs = 0;
};

// Requests one prohibited and one permitted case per seed. All seeds must
// share one framework. Throws PipelineError when every request fails.
BuildResult build_benchmark(std::span<const statute::Seed> seeds, const ClientConfig& config,
                            const BuildOptions& options = {});

// Stratified by (framework, label): each stratum is ordered by a seeded hash
// of the case id and the per-framework train quota is shared out over labels
// by largest remainder. Input order does not matter.
Dataset split_dataset(Dataset ds, double ratio, std::uint64_t rng_seed);

// Asks the model under test for a verdict on each case (factual background
// only) and parses the boxed answer. Unparseable answers become abstains.
std::vector<eval::PredictionRecord> predict_verdicts(std::span<const CaseRecord> cases, const ClientConfig& config);

}  // namespace forge::casegen
