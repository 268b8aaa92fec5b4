#pragma once

// Verdict scoring, per-chapter accuracy, chapter histograms and human-rating
// aggregation. All percentages are kept in full precision; rounding happens
// only when a table is formatted.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/common.hpp"

namespace forge::eval {

struct PredictionRecord {
  std::string case_id;
  Framework framework = Framework::eu_ai_act();
  std::string chapter_id;
  Verdict gold = Verdict::kProhibited;
  std::optional<Verdict> predicted;  // nullopt = abstain / unparseable
  std::optional<std::string> raw_response;

  Json to_json() const;
  // Gold accepts prohibited/permitted and the external unsafe/safe vocabulary
  // (unsafe -> prohibited, safe -> permitted). A null or unrecognized
  // prediction is an abstain.
  static PredictionRecord from_json(const Json& j);
};

Verdict parse_gold_label(std::string_view s);

struct ClassMetrics {
  Verdict label = Verdict::kProhibited;
  std::size_t support = 0;        // gold count
  std::size_t predicted = 0;      // predicted count
  std::size_t true_positive = 0;
  double precision = 0.0;  // %, 0 when nothing was predicted for the class
  double recall = 0.0;     // %, 0 when the class has no support
  double f1 = 0.0;         // %
};

struct ClassificationReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t abstained = 0;
  bool abstains_excluded = false;
  double accuracy = 0.0;  // %
  // Rows: gold prohibited / permitted. Columns: predicted prohibited /
  // permitted / abstain.
  std::array<std::array<std::size_t, 3>, 2> confusion{};
  std::array<ClassMetrics, 2> per_class{};
  double macro_f1 = 0.0;  // %

  Json to_json() const;
};

struct ScoreOptions {
  // Drop abstentions from every metric instead of scoring them as wrong.
  bool exclude_abstains = false;
};

ClassificationReport score_predictions(std::span<const PredictionRecord> records, const ScoreOptions& options = {});

struct ChapterStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // %
};

struct ChapterReport {
  // Canonical chapter order; chapters without samples are absent.
  std::vector<std::pair<std::string, ChapterStats>> per_chapter;
  std::size_t total = 0;
  std::size_t correct = 0;
  double micro_average = 0.0;  // % over all samples

  const ChapterStats* find(std::string_view chapter_id) const;
  Json to_json() const;
};

// Throws ValidationError naming the id when a chapter is not in its
// framework's canonical list.
ChapterReport per_chapter_report(std::span<const PredictionRecord> records);

struct DistributionReport {
  Framework framework = Framework::eu_ai_act();
  std::vector<std::pair<std::string, std::size_t>> per_chapter_counts;  // every canonical chapter
  std::size_t missing_count = 0;
  std::size_t total = 0;
  double missing_rate = 0.0;  // %

  Json to_json() const;
  std::string to_csv() const;  // "chapter,count"
};

// Empty or non-canonical allocations count as missing.
DistributionReport chapter_distribution(std::span<const std::optional<std::string>> allocations,
                                        const Framework& framework);

struct HumanRating {
  std::string rater;
  std::string case_id;
  std::string dimension;  // alignment / coherence / relevance
  int score = 0;          // 1..5
  std::string framework;  // optional column group, e.g. "eu-ai-act"

  static HumanRating from_json(const Json& j);
  Json to_json() const;
};

struct HumanEvalReport {
  struct Column {
    std::string dimension;
    std::string framework;
    friend auto operator<=>(const Column&, const Column&) = default;
  };
  std::vector<Column> columns;
  std::vector<std::string> raters;
  // (rater, column) -> normalized score % (mean / 5 * 100).
  std::map<std::pair<std::string, Column>, double> scores;
  std::map<std::pair<std::string, Column>, std::size_t> counts;
  // column -> mean over the raters that scored it.
  std::map<Column, double> averages;

  std::optional<double> score(const std::string& rater, const std::string& dimension,
                              const std::string& framework = "") const;
  std::optional<double> average(const std::string& dimension, const std::string& framework = "") const;
  Json to_json() const;
};

const std::vector<std::string>& rating_dimensions();  // alignment, coherence, relevance

HumanEvalReport human_eval_aggregate(std::span<const HumanRating> ratings);

// --- text output ----------------------------------------------------------------

std::string format_classification_table(const ClassificationReport& report);
// One row per model; columns Ch.N in canonical order plus Avg.
std::string format_chapter_table(const Framework& framework,
                                 const std::vector<std::pair<std::string, ChapterReport>>& rows);
std::string format_human_eval_table(const HumanEvalReport& report);
std::string format_distribution_table(const DistributionReport& report);

}  // namespace forge::eval
