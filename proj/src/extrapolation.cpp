#include "forge/extrapolation.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>

#include "forge/casegen.hpp"
#include "forge/chapters.hpp"
#include "forge/parallel.hpp"

namespace forge::extrapolation {
namespace {

std::string cell_to_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();  // true / false / numbers
}

std::string normalize_label_key(std::string_view s) { return to_lower(trim(s)); }

std::string replace_curly_quotes(std::string s) {
  for (const char* q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"})
    s = replace_all(std::move(s), q, "\"");
  s = replace_all(std::move(s), "``", "\"");
  s = replace_all(std::move(s), "''", "\"");
  return s;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = trim(s.substr(1, s.size() - 2));
  return s;
}

}  // namespace

SafetySource SafetySource::from_string(std::string_view s) {
  std::string k = to_lower(trim(s));
  k.erase(std::remove_if(k.begin(), k.end(), [](char c) { return c == '-' || c == '_' || c == ' ' || c == '.'; }), k.end());
  if (k == "aegis2" || k == "aegis20" || k == "aegis") return {Kind::kAegis2, "aegis2"};
  if (k == "wildguard" || k == "wildguardtest") return {Kind::kWildGuard, "wildguard"};
  if (k == "openaimod" || k == "openaimoderation") return {Kind::kOpenAiMod, "openai_mod"};
  if (k == "saferlhf" || k == "pkusaferlhf") return {Kind::kSafeRlhf, "saferlhf"};
  if (k.empty()) throw ValidationError("empty source name");
  return {Kind::kCustom, slugify(s)};
}

std::string_view to_string(SafetyTask t) noexcept {
  return t == SafetyTask::kPromptSafety ? "PROMPT_SAFETY" : "RESPONSE_SAFETY";
}
std::string_view to_string(SafetyLabel l) noexcept { return l == SafetyLabel::kSafe ? "SAFE" : "UNSAFE"; }

SafetyLabel safety_label_from_string(std::string_view s) {
  auto k = normalize_label_key(s);
  if (k == "safe") return SafetyLabel::kSafe;
  if (k == "unsafe") return SafetyLabel::kUnsafe;
  throw ValidationError("safety label must be SAFE or UNSAFE, got '" + std::string(s) + "'", {std::string(s)});
}

Json ExternalSafetyItem::to_json() const {
  Json j{{"item_ref", item_ref},
         {"source", source.name()},
         {"task", std::string(to_string(task))},
         {"text", text},
         {"label", std::string(to_string(label))}};
  j["category"] = category ? Json(*category) : Json(nullptr);
  return j;
}

ExternalSafetyItem ExternalSafetyItem::from_json(const Json& j) {
  std::vector<std::string> bad;
  for (const char* k : {"item_ref", "source", "task", "text", "label"})
    if (!j.contains(k) || !j[k].is_string()) bad.emplace_back(k);
  if (!bad.empty()) throw ValidationError("safety item lacks string fields", bad);
  ExternalSafetyItem it;
  it.item_ref = j["item_ref"].get<std::string>();
  it.source = SafetySource::from_string(j["source"].get<std::string>());
  const auto task = j["task"].get<std::string>();
  if (task == "PROMPT_SAFETY") it.task = SafetyTask::kPromptSafety;
  else if (task == "RESPONSE_SAFETY") it.task = SafetyTask::kResponseSafety;
  else throw ValidationError("unknown task '" + task + "'", {"task"});
  it.text = j["text"].get<std::string>();
  if (is_blank(it.text)) throw ValidationError("safety item text is empty", {"text"});
  it.label = safety_label_from_string(j["label"].get<std::string>());
  if (j.contains("category") && j["category"].is_string()) it.category = j["category"].get<std::string>();
  return it;
}

// --- mapping ---------------------------------------------------------------------

IngestMapping IngestMapping::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("ingest mapping must be a JSON object");
  IngestMapping m;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "format") {
        auto f = to_lower(v.get<std::string>());
        if (f == "auto") m.format = Format::kAuto;
        else if (f == "jsonl") m.format = Format::kJsonl;
        else if (f == "csv") m.format = Format::kCsv;
        else throw ConfigError("mapping.format must be auto, jsonl or csv");
      } else if (k == "task") {
        auto t = to_lower(v.get<std::string>());
        if (t == "prompt_safety" || t == "prompt") m.task = SafetyTask::kPromptSafety;
        else if (t == "response_safety" || t == "response") m.task = SafetyTask::kResponseSafety;
        else throw ConfigError("mapping.task must be prompt_safety or response_safety");
      } else if (k == "text") m.text_field = v.get<std::string>();
      else if (k == "response") m.response_field = v.get<std::string>();
      else if (k == "label") m.label_field = v.get<std::string>();
      else if (k == "id") m.id_field = v.get<std::string>();
      else if (k == "category") m.category_field = v.get<std::string>();
      else if (k == "labels") {
        m.label_map.clear();
        for (const auto& [raw, norm] : v.items()) m.label_map[normalize_label_key(raw)] = safety_label_from_string(norm.get<std::string>());
      } else {
        throw ConfigError("unknown mapping key '" + k + "'");
      }
    }
  } catch (const Json::type_error& e) {
    throw ConfigError(std::string("ingest mapping: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("ingest mapping: ") + e.what());
  }
  if (m.text_field.empty() || m.label_field.empty()) throw ConfigError("mapping needs text and label fields");
  if (m.task == SafetyTask::kResponseSafety && m.response_field.empty())
    throw ConfigError("response_safety mapping needs a response field");
  if (m.label_map.empty()) throw ConfigError("mapping.labels is empty");
  return m;
}

Json IngestMapping::to_json() const {
  Json labels = Json::object();
  for (const auto& [k, v] : label_map) labels[k] = std::string(to_string(v));
  return Json{{"format", format == Format::kAuto ? "auto" : format == Format::kJsonl ? "jsonl" : "csv"},
              {"task", to_lower(to_string(task))},
              {"text", text_field},
              {"response", response_field},
              {"label", label_field},
              {"id", id_field},
              {"category", category_field},
              {"labels", labels}};
}

IngestMapping default_mapping(const SafetySource& source) {
  IngestMapping m;
  switch (source.kind()) {
    case SafetySource::Kind::kAegis2:
      m.id_field = "id";
      m.label_field = "prompt_label";
      m.category_field = "violated_categories";
      break;
    case SafetySource::Kind::kWildGuard:
      m.label_field = "prompt_harm_label";
      m.category_field = "subcategory";
      m.label_map = {{"unharmful", SafetyLabel::kSafe}, {"harmful", SafetyLabel::kUnsafe}};
      break;
    case SafetySource::Kind::kOpenAiMod:
      m.label_map = {{"0", SafetyLabel::kSafe}, {"1", SafetyLabel::kUnsafe},
                     {"safe", SafetyLabel::kSafe}, {"unsafe", SafetyLabel::kUnsafe}};
      break;
    case SafetySource::Kind::kSafeRlhf:
      m.task = SafetyTask::kResponseSafety;
      m.response_field = "response_0";
      m.label_field = "is_response_0_safe";
      m.category_field = "";
      m.label_map = {{"true", SafetyLabel::kSafe}, {"false", SafetyLabel::kUnsafe}};
      break;
    case SafetySource::Kind::kCustom:
      break;
  }
  return m;
}

// --- CSV -----------------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw ParseError("stray quote inside unquoted CSV field", line);
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // CRLF handled on the '\n'.
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field", line);
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

// --- ingestion -----------------------------------------------------------------------

IngestResult ingest_safety_dataset(const std::string& path, const SafetySource& source, const IngestMapping& mapping) {
  auto format = mapping.format;
  if (format == IngestMapping::Format::kAuto)
    format = to_lower(std::filesystem::path(path).extension().string()) == ".csv" ? IngestMapping::Format::kCsv
                                                                                  : IngestMapping::Format::kJsonl;
  // Materialize rows as string maps.
  std::vector<std::map<std::string, std::string>> rows;
  if (format == IngestMapping::Format::kCsv) {
    auto table = parse_csv(read_file(path));
    if (table.empty()) throw ValidationError(path + ": CSV has no header");
    const auto& header = table.front();
    for (const auto& need : {mapping.text_field, mapping.label_field})
      if (std::find(header.begin(), header.end(), need) == header.end())
        throw ValidationError(path + ": CSV header lacks mapped column '" + need + "'", {need});
    for (std::size_t r = 1; r < table.size(); ++r) {
      std::map<std::string, std::string> m;
      for (std::size_t c = 0; c < header.size() && c < table[r].size(); ++c) m[header[c]] = table[r][c];
      rows.push_back(std::move(m));
    }
  } else {
    for (const auto& j : read_jsonl(path)) {
      std::map<std::string, std::string> m;
      if (j.is_object())
        for (const auto& [k, v] : j.items()) m[k] = cell_to_string(v);
      rows.push_back(std::move(m));
    }
  }

  IngestResult out;
  std::set<std::string> unmapped;
  auto field = [](const std::map<std::string, std::string>& m, const std::string& k) -> std::optional<std::string> {
    if (k.empty()) return std::nullopt;
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ++out.rows_read;
    const auto& row = rows[r];
    const std::size_t row_no = r + 1;
    auto text = field(row, mapping.text_field);
    auto label_raw = field(row, mapping.label_field);
    if (!text || is_blank(*text)) {
      out.rejects.push_back({{"row", row_no}, {"reason", "missing or empty '" + mapping.text_field + "'"}});
      continue;
    }
    if (!label_raw || is_blank(*label_raw)) {
      out.rejects.push_back({{"row", row_no}, {"reason", "missing label '" + mapping.label_field + "'"}});
      continue;
    }
    auto lm = mapping.label_map.find(normalize_label_key(*label_raw));
    if (lm == mapping.label_map.end()) {
      unmapped.insert(*label_raw);
      continue;
    }
    ExternalSafetyItem item;
    item.source = source;
    item.task = mapping.task;
    item.label = lm->second;
    if (mapping.task == SafetyTask::kResponseSafety) {
      auto resp = field(row, mapping.response_field);
      if (!resp || is_blank(*resp)) {
        out.rejects.push_back({{"row", row_no}, {"reason", "missing or empty '" + mapping.response_field + "'"}});
        continue;
      }
      item.text = "PROMPT: " + *text + "\nRESPONSE: " + *resp;
    } else {
      item.text = *text;
    }
    auto id = field(row, mapping.id_field);
    item.item_ref = source.name() + ":" + (id && !id->empty() ? *id : std::to_string(row_no));
    if (auto cat = field(row, mapping.category_field); cat && !is_blank(*cat)) item.category = *cat;
    out.items.push_back(std::move(item));
  }
  if (!unmapped.empty()) {
    std::vector<std::string> values(unmapped.begin(), unmapped.end());
    std::string list;
    for (const auto& v : values) list += (list.empty() ? "'" : ", '") + v + "'";
    throw ValidationError(path + ": label values without a mapping: " + list, values);
  }
  return out;
}

// --- allocation ----------------------------------------------------------------------

Json AllocationResult::to_json() const {
  return Json{{"item_ref", item_ref},
              {"framework", framework.slug()},
              {"chapter_id", chapter_id ? Json(*chapter_id) : Json(nullptr)},
              {"raw_response", raw_response}};
}

AllocationResult AllocationResult::from_json(const Json& j) {
  std::vector<std::string> bad;
  for (const char* k : {"item_ref", "framework", "raw_response"})
    if (!j.contains(k) || !j[k].is_string()) bad.emplace_back(k);
  if (!bad.empty()) throw ValidationError("allocation record lacks string fields", bad);
  AllocationResult r;
  r.item_ref = j["item_ref"].get<std::string>();
  r.framework = Framework::from_string(j["framework"].get<std::string>());
  r.raw_response = j["raw_response"].get<std::string>();
  if (j.contains("chapter_id") && j["chapter_id"].is_string() && !j["chapter_id"].get<std::string>().empty()) {
    r.chapter_id = j["chapter_id"].get<std::string>();
    if (!find_chapter(r.framework, *r.chapter_id))
      throw ValidationError("allocation names a non-canonical chapter '" + *r.chapter_id + "'", {*r.chapter_id});
  }
  return r;
}

std::optional<std::string> extract_boxed_answer(std::string_view raw_view) {
  const std::string raw = replace_curly_quotes(std::string(raw_view));
  auto pos = raw.rfind("boxed{");
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t open = pos + 5;
  int depth = 0;
  std::size_t close = std::string::npos;
  bool in_string = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) {
      close = i;
      break;
    }
  }
  const std::string whole = close == std::string::npos ? raw.substr(open) : raw.substr(open, close - open + 1);
  Json j = Json::parse(whole, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("result") && j["result"].is_string())
    return trim(j["result"].get<std::string>());
  std::string inner = whole.size() >= 2 && whole.back() == '}' ? whole.substr(1, whole.size() - 2) : whole.substr(1);
  static const std::regex result_kv(R"(^\s*"?result"?\s*:\s*([\s\S]*)$)", std::regex::icase);
  std::smatch m;
  if (std::regex_match(inner, m, result_kv)) inner = m[1];
  inner = strip_quotes(inner);
  if (inner.empty()) return std::nullopt;
  return inner;
}

std::optional<std::string> parse_allocation(std::string_view raw, const Framework& fw) {
  auto answer = extract_boxed_answer(raw);
  if (!answer) return std::nullopt;
  auto ch = match_chapter(fw, *answer);
  if (!ch) return std::nullopt;
  return ch->id;
}

std::string allocation_prompt(const ExternalSafetyItem& item, const Framework& fw) {
  using namespace casegen;
  return render_prompt(builtin_template(TemplateName::kAllocate), allocate_bindings(fw, item.text));
}

AllocationResult allocate_chapter(const ExternalSafetyItem& item, const Framework& fw, const ChatClient& client) {
  AllocationResult r;
  r.item_ref = item.item_ref;
  r.framework = fw;
  r.raw_response = client.complete(allocation_prompt(item, fw));
  r.chapter_id = parse_allocation(r.raw_response, fw);
  return r;
}

std::vector<AllocationResult> allocate_batch(std::span<const ExternalSafetyItem> items, const Framework& fw,
                                             const ClientConfig& config) {
  if (!has_canonical_chapters(fw)) throw ConfigError("no chapter list for framework " + fw.slug());
  ChatClient client(config);
  std::vector<AllocationResult> out(items.size());
  parallel_for(items.size(), static_cast<std::size_t>(config.max_parallel),
               [&](std::size_t i) { out[i] = allocate_chapter(items[i], fw, client); });
  return out;
}

eval::DistributionReport allocation_distribution(std::span<const AllocationResult> results, const Framework& fw) {
  std::vector<std::optional<std::string>> alloc;
  alloc.reserve(results.size());
  for (const auto& r : results) alloc.push_back(r.chapter_id);
  return eval::chapter_distribution(alloc, fw);
}

// --- extrapolation -------------------------------------------------------------------

Json ExtrapolatedCase::to_json() const {
  return Json{{"item_ref", item_ref},
              {"framework", framework.slug()},
              {"label", std::string(forge::to_string(label))},
              {"factual_background", factual_background},
              {"legal_analysis", legal_analysis}};
}

Sections parse_case_sections(std::string_view raw) {
  static const std::regex header(
      R"(^\s*(?:#+\s*)?(?:[-*]\s+)?(?:\*\*|__)?\s*(factual background|legal analy(?:zing|sis))\s*(?:\*\*|__)?\s*:?\s*(?:\*\*|__)?\s*(.*)$)",
      std::regex::icase);
  std::optional<std::string> facts, analysis;
  std::optional<std::string>* current = nullptr;
  std::size_t start = 0;
  const std::string text(raw);
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, header)) {
      current = to_lower(m[1].str()) == "factual background" ? &facts : &analysis;
      // First occurrence wins; a repeated header starts a throwaway section.
      if (current->has_value()) current = nullptr;
      else *current = m[2].str();
    } else if (current) {
      **current += "\n" + line;
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  std::vector<std::string> missing;
  if (!facts || is_blank(*facts)) missing.emplace_back("Factual Background");
  if (!analysis || is_blank(*analysis)) missing.emplace_back("Legal Analyzing");
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw ParseError("response lacks section(s): " + list);
  }
  return {trim(*facts), trim(*analysis)};
}

std::string extrapolation_prompt(const ExternalSafetyItem& item, const Framework& fw, Verdict label) {
  using namespace casegen;
  return render_prompt(builtin_template(TemplateName::kExtrapolate), extrapolate_bindings(fw, item.text, label));
}

ExtrapolatedCase extrapolate_case(const ExternalSafetyItem& item, const Framework& fw, Verdict label,
                                  const ChatClient& client) {
  const std::string raw = client.complete(extrapolation_prompt(item, fw, label));
  auto sections = parse_case_sections(raw);
  return {item.item_ref, fw, label, std::move(sections.factual_background), std::move(sections.legal_analysis)};
}

ExtrapolationBatch extrapolate_batch(std::span<const ExternalSafetyItem> items, const Framework& fw,
                                     const LabelPolicy& policy, std::optional<Verdict> forced,
                                     const ClientConfig& config) {
  ChatClient client(config);
  std::vector<std::optional<ExtrapolatedCase>> done(items.size());
  std::vector<std::optional<Json>> rejected(items.size());
  parallel_for(items.size(), static_cast<std::size_t>(config.max_parallel), [&](std::size_t i) {
    const auto& item = items[i];
    const Verdict label = forced.value_or(policy.map(item.label));
    std::string raw;
    try {
      raw = client.complete(extrapolation_prompt(item, fw, label));
      auto s = parse_case_sections(raw);
      done[i] = ExtrapolatedCase{item.item_ref, fw, label, std::move(s.factual_background), std::move(s.legal_analysis)};
    } catch (const ParseError& e) {
      rejected[i] = Json{{"item_ref", item.item_ref}, {"label", std::string(forge::to_string(label))},
                         {"error", e.what()}, {"raw_response", raw}};
    }
  });
  ExtrapolationBatch out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (done[i]) out.cases.push_back(std::move(*done[i]));
    if (rejected[i]) out.rejects.push_back(std::move(*rejected[i]));
  }
  return out;
}

}  // namespace forge::extrapolation
