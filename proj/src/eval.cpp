#include "forge/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "forge/chapters.hpp"

namespace forge::eval {
namespace {

double pct(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

int label_index(Verdict v) { return v == Verdict::kProhibited ? 0 : 1; }

// Position of a chapter in its framework's canonical list.
std::size_t canonical_position(const Framework& fw, const std::string& chapter_id) {
  const auto& chapters = canonical_chapters(fw);
  for (std::size_t i = 0; i < chapters.size(); ++i)
    if (chapters[i].id == chapter_id) return i;
  throw ValidationError("unknown chapter id '" + chapter_id + "' for framework " + fw.slug(), {chapter_id});
}

std::string pad_right(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }
std::string pad_left(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace

Verdict parse_gold_label(std::string_view s) {
  auto l = to_lower(trim(s));
  if (l == "prohibited" || l == "unsafe") return Verdict::kProhibited;
  if (l == "permitted" || l == "safe") return Verdict::kPermitted;
  throw ValidationError("unknown gold label '" + std::string(s) + "'", {std::string(s)});
}

Json PredictionRecord::to_json() const {
  Json j{{"case_id", case_id},
         {"framework", framework.slug()},
         {"chapter_id", chapter_id},
         {"gold", std::string(to_string(gold))},
         {"predicted", predicted ? Json(std::string(to_string(*predicted))) : Json(nullptr)}};
  if (raw_response) j["raw_response"] = *raw_response;
  return j;
}

PredictionRecord PredictionRecord::from_json(const Json& j) {
  std::vector<std::string> missing;
  for (const char* k : {"case_id", "framework", "chapter_id", "gold"})
    if (!j.contains(k) || !j[k].is_string()) missing.push_back(k);
  if (!missing.empty()) throw ValidationError("prediction record lacks string fields", missing);
  PredictionRecord r;
  r.case_id = j["case_id"].get<std::string>();
  r.framework = Framework::from_string(j["framework"].get<std::string>());
  r.chapter_id = j["chapter_id"].get<std::string>();
  r.gold = parse_gold_label(j["gold"].get<std::string>());
  if (j.contains("predicted") && j["predicted"].is_string()) r.predicted = verdict_from_string(j["predicted"].get<std::string>());
  if (j.contains("raw_response") && j["raw_response"].is_string()) r.raw_response = j["raw_response"].get<std::string>();
  return r;
}

// --- classification ---------------------------------------------------------------

ClassificationReport score_predictions(std::span<const PredictionRecord> records, const ScoreOptions& options) {
  if (records.empty()) throw ValidationError("no predictions to score");
  ClassificationReport rep;
  rep.abstains_excluded = options.exclude_abstains;
  for (const auto& r : records) {
    const int g = label_index(r.gold);
    if (!r.predicted) {
      ++rep.abstained;
      if (options.exclude_abstains) continue;
      ++rep.confusion[g][2];
    } else {
      ++rep.confusion[g][label_index(*r.predicted)];
    }
    ++rep.total;
  }
  if (rep.total == 0) throw ValidationError("every prediction abstained and abstains are excluded");
  rep.correct = rep.confusion[0][0] + rep.confusion[1][1];
  rep.accuracy = pct(rep.correct, rep.total);
  for (int c = 0; c < 2; ++c) {
    auto& m = rep.per_class[c];
    m.label = c == 0 ? Verdict::kProhibited : Verdict::kPermitted;
    m.true_positive = rep.confusion[c][c];
    m.support = rep.confusion[c][0] + rep.confusion[c][1] + rep.confusion[c][2];
    m.predicted = rep.confusion[0][c] + rep.confusion[1][c];
    m.precision = pct(m.true_positive, m.predicted);
    m.recall = pct(m.true_positive, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  rep.macro_f1 = (rep.per_class[0].f1 + rep.per_class[1].f1) / 2.0;
  return rep;
}

Json ClassificationReport::to_json() const {
  Json classes = Json::array();
  for (const auto& m : per_class)
    classes.push_back({{"label", std::string(to_string(m.label))},
                       {"support", m.support},
                       {"predicted", m.predicted},
                       {"true_positive", m.true_positive},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1}});
  Json conf = Json::object();
  const char* cols[3] = {"prohibited", "permitted", "abstain"};
  for (int g = 0; g < 2; ++g) {
    Json row = Json::object();
    for (int p = 0; p < 3; ++p) row[cols[p]] = confusion[g][p];
    conf[cols[g]] = row;
  }
  return Json{{"total", total},       {"correct", correct},     {"abstained", abstained},
              {"abstains_excluded", abstains_excluded},        {"accuracy", accuracy},
              {"per_class", classes}, {"macro_f1", macro_f1},   {"confusion", conf}};
}

// --- per chapter -------------------------------------------------------------------

ChapterReport per_chapter_report(std::span<const PredictionRecord> records) {
  // Frameworks in first-appearance order, chapters in canonical order.
  std::vector<std::string> fw_order;
  std::map<std::string, Framework> frameworks;
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::string, ChapterStats>> buckets;
  for (const auto& r : records) {
    if (!has_canonical_chapters(r.framework))
      throw ValidationError("framework " + r.framework.slug() + " has no chapter list", {r.chapter_id});
    auto fw_it = std::find(fw_order.begin(), fw_order.end(), r.framework.slug());
    std::size_t fw_idx = static_cast<std::size_t>(fw_it - fw_order.begin());
    if (fw_it == fw_order.end()) fw_order.push_back(r.framework.slug());
    const std::size_t pos = canonical_position(r.framework, r.chapter_id);
    auto& slot = buckets[{fw_idx, pos}];
    slot.first = r.chapter_id;
    ++slot.second.count;
    if (r.predicted && *r.predicted == r.gold) ++slot.second.correct;
  }
  ChapterReport rep;
  for (auto& [key, entry] : buckets) {
    entry.second.accuracy = pct(entry.second.correct, entry.second.count);
    rep.total += entry.second.count;
    rep.correct += entry.second.correct;
    rep.per_chapter.push_back(entry);
  }
  rep.micro_average = pct(rep.correct, rep.total);
  return rep;
}

const ChapterStats* ChapterReport::find(std::string_view chapter_id) const {
  for (const auto& [id, stats] : per_chapter)
    if (id == chapter_id) return &stats;
  return nullptr;
}

Json ChapterReport::to_json() const {
  Json chapters = Json::array();
  for (const auto& [id, s] : per_chapter)
    chapters.push_back({{"chapter_id", id}, {"count", s.count}, {"correct", s.correct}, {"accuracy", s.accuracy}});
  return Json{{"per_chapter", chapters}, {"total", total}, {"correct", correct}, {"micro_average", micro_average}};
}

// --- distribution ------------------------------------------------------------------

DistributionReport chapter_distribution(std::span<const std::optional<std::string>> allocations,
                                        const Framework& framework) {
  const auto& chapters = canonical_chapters(framework);
  DistributionReport rep;
  rep.framework = framework;
  for (const auto& c : chapters) rep.per_chapter_counts.emplace_back(c.id, 0);
  for (const auto& a : allocations) {
    ++rep.total;
    bool placed = false;
    if (a && !a->empty()) {
      for (auto& [id, n] : rep.per_chapter_counts)
        if (id == *a) {
          ++n;
          placed = true;
          break;
        }
    }
    if (!placed) ++rep.missing_count;
  }
  rep.missing_rate = pct(rep.missing_count, rep.total);
  return rep;
}

Json DistributionReport::to_json() const {
  Json counts = Json::array();
  for (const auto& [id, n] : per_chapter_counts) counts.push_back({{"chapter_id", id}, {"count", n}});
  return Json{{"framework", framework.slug()},
              {"per_chapter_counts", counts},
              {"missing_count", missing_count},
              {"total", total},
              {"missing_rate", missing_rate}};
}

std::string DistributionReport::to_csv() const {
  std::string out = "chapter,count\n";
  for (const auto& [id, n] : per_chapter_counts) out += id + "," + std::to_string(n) + "\n";
  return out;
}

// --- human evaluation ----------------------------------------------------------------

const std::vector<std::string>& rating_dimensions() {
  static const std::vector<std::string> dims{"alignment", "coherence", "relevance"};
  return dims;
}

HumanRating HumanRating::from_json(const Json& j) {
  std::vector<std::string> bad;
  for (const char* k : {"rater", "case_id", "dimension"})
    if (!j.contains(k) || !j[k].is_string()) bad.push_back(k);
  if (!j.contains("score") || !j["score"].is_number_integer()) bad.push_back("score");
  if (!bad.empty()) throw ValidationError("malformed rating", bad);
  HumanRating r;
  r.rater = j["rater"].get<std::string>();
  r.case_id = j["case_id"].get<std::string>();
  r.dimension = to_lower(j["dimension"].get<std::string>());
  r.score = j["score"].get<int>();
  if (j.contains("framework") && j["framework"].is_string()) r.framework = j["framework"].get<std::string>();
  return r;
}

Json HumanRating::to_json() const {
  Json j{{"rater", rater}, {"case_id", case_id}, {"dimension", dimension}, {"score", score}};
  if (!framework.empty()) j["framework"] = framework;
  return j;
}

HumanEvalReport human_eval_aggregate(std::span<const HumanRating> ratings) {
  std::map<std::pair<std::string, HumanEvalReport::Column>, long> sums;
  HumanEvalReport rep;
  std::set<HumanEvalReport::Column> columns;
  for (const auto& r : ratings) {
    if (r.score < 1 || r.score > 5)
      throw ValidationError("score " + std::to_string(r.score) + " outside 1..5 (rater " + r.rater + ", case " +
                                r.case_id + ")",
                            {"score"});
    HumanEvalReport::Column col{r.dimension, r.framework};
    columns.insert(col);
    if (std::find(rep.raters.begin(), rep.raters.end(), r.rater) == rep.raters.end()) rep.raters.push_back(r.rater);
    sums[{r.rater, col}] += r.score;
    ++rep.counts[{r.rater, col}];
  }
  std::sort(rep.raters.begin(), rep.raters.end());
  // Dimensions in the canonical order, then anything else alphabetically.
  const auto& dims = rating_dimensions();
  rep.columns.assign(columns.begin(), columns.end());
  std::stable_sort(rep.columns.begin(), rep.columns.end(), [&](const auto& a, const auto& b) {
    auto rank = [&](const std::string& d) {
      auto it = std::find(dims.begin(), dims.end(), d);
      return static_cast<std::size_t>(it - dims.begin());
    };
    if (rank(a.dimension) != rank(b.dimension)) return rank(a.dimension) < rank(b.dimension);
    return a < b;
  });
  for (const auto& [key, sum] : sums) {
    // mean / 5 * 100 == sum * 20 / n; the second form keeps e.g. 221/50 -> 88.4.
    rep.scores[key] = static_cast<double>(sum) * 20.0 / static_cast<double>(rep.counts[key]);
  }
  for (const auto& col : rep.columns) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& rater : rep.raters) {
      auto it = rep.scores.find({rater, col});
      if (it == rep.scores.end()) continue;
      total += it->second;
      ++n;
    }
    rep.averages[col] = total / static_cast<double>(n);
  }
  return rep;
}

std::optional<double> HumanEvalReport::score(const std::string& rater, const std::string& dimension,
                                             const std::string& framework) const {
  auto it = scores.find({rater, Column{dimension, framework}});
  if (it == scores.end()) return std::nullopt;
  return it->second;
}

std::optional<double> HumanEvalReport::average(const std::string& dimension, const std::string& framework) const {
  auto it = averages.find(Column{dimension, framework});
  if (it == averages.end()) return std::nullopt;
  return it->second;
}

Json HumanEvalReport::to_json() const {
  Json cols = Json::array();
  for (const auto& c : columns) {
    Json per_rater = Json::object();
    for (const auto& r : raters) {
      auto it = scores.find({r, c});
      if (it != scores.end()) per_rater[r] = {{"score", it->second}, {"ratings", counts.at({r, c})}};
    }
    Json col{{"dimension", c.dimension}, {"raters", per_rater}, {"average", averages.at(c)}};
    if (!c.framework.empty()) col["framework"] = c.framework;
    cols.push_back(col);
  }
  return Json{{"raters", raters}, {"columns", cols}};
}

// --- tables ------------------------------------------------------------------------

std::string format_classification_table(const ClassificationReport& r) {
  std::ostringstream out;
  out << pad_right("class", 12) << pad_left("precision", 11) << pad_left("recall", 9) << pad_left("f1", 9)
      << pad_left("support", 9) << "\n";
  for (const auto& m : r.per_class)
    out << pad_right(std::string(to_string(m.label)), 12) << pad_left(format_fixed(m.precision), 11)
        << pad_left(format_fixed(m.recall), 9) << pad_left(format_fixed(m.f1), 9)
        << pad_left(std::to_string(m.support), 9) << "\n";
  out << "\n"
      << pad_right("accuracy", 12) << pad_left(format_fixed(r.accuracy), 11) << "\n"
      << pad_right("macro f1", 12) << pad_left(format_fixed(r.macro_f1), 11) << "\n"
      << pad_right("abstained", 12) << pad_left(std::to_string(r.abstained), 11)
      << (r.abstains_excluded ? " (excluded)" : " (scored as wrong)") << "\n";
  return out.str();
}

std::string format_chapter_table(const Framework& framework,
                                 const std::vector<std::pair<std::string, ChapterReport>>& rows) {
  const auto& chapters = canonical_chapters(framework);
  std::size_t name_w = 6;
  for (const auto& [name, rep] : rows) name_w = std::max(name_w, name.size() + 2);
  std::ostringstream out;
  out << pad_right("Models", name_w);
  for (const auto& c : chapters) out << pad_left("Ch." + std::to_string(c.number), 8);
  out << pad_left("Avg.", 8) << "\n";
  for (const auto& [name, rep] : rows) {
    out << pad_right(name, name_w);
    for (const auto& c : chapters) {
      const auto* s = rep.find(c.id);
      out << pad_left(s ? format_fixed(s->accuracy) : "-", 8);
    }
    out << pad_left(format_fixed(rep.micro_average), 8) << "\n";
  }
  return out.str();
}

std::string format_human_eval_table(const HumanEvalReport& r) {
  std::ostringstream out;
  std::size_t name_w = 8;
  for (const auto& rater : r.raters) name_w = std::max(name_w, rater.size() + 2);
  std::vector<std::string> headers;
  std::size_t col_w = 10;
  for (const auto& c : r.columns) {
    headers.push_back(c.framework.empty() ? c.dimension : c.dimension + "/" + c.framework);
    col_w = std::max(col_w, headers.back().size() + 2);
  }
  out << pad_right("", name_w);
  for (const auto& h : headers) out << pad_left(h, col_w);
  out << "\n";
  for (const auto& rater : r.raters) {
    out << pad_right(rater, name_w);
    for (const auto& c : r.columns) {
      auto it = r.scores.find({rater, c});
      out << pad_left(it == r.scores.end() ? "-" : format_fixed(it->second), col_w);
    }
    out << "\n";
  }
  out << pad_right("Average", name_w);
  for (const auto& c : r.columns) out << pad_left(format_fixed(r.averages.at(c)), col_w);
  out << "\n";
  return out.str();
}

std::string format_distribution_table(const DistributionReport& r) {
  std::ostringstream out;
  for (const auto& [id, n] : r.per_chapter_counts) {
    auto ch = find_chapter(r.framework, id);
    out << pad_right(ch ? ch->full_name : id, 72) << pad_left(std::to_string(n), 7) << "\n";
  }
  out << pad_right("missing", 72) << pad_left(std::to_string(r.missing_count), 7) << "\n"
      << pad_right("total", 72) << pad_left(std::to_string(r.total), 7) << "\n"
      << pad_right("missing rate (%)", 72) << pad_left(format_fixed(r.missing_rate), 7) << "\n";
  return out.str();
}

}  // namespace forge::eval
