#include "forge/casegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <regex>
#include <set>

#include "forge/chapters.hpp"
#include "forge/parallel.hpp"
#include "forge/reward.hpp"

namespace forge::casegen {
namespace {

// The generation prompt is kept word for word apart from the framework name,
// which becomes a slot so the same text drives GDPR seeds.
const char* kBenchmarkGen = R"(## Role:
You are a legal expert specializing in EU regulations, tasked with generating realistic legal case scenarios based on the {law_name}. The scenarios can represent {result} samples.

## Rules:
{rules}

## Task:
Develop a realistic legal case scenario of the {law_name}, including:
- Parties Involved: Define the plaintiff(s), defendant(s), and any relevant third parties (e.g., AI developers, users, or regulatory bodies).

- Factual Background: Provide a detailed narrative of events leading to the scenario, ensuring alignment with the {law_name} and real-world plausibility.

- Legal Issues: Identify specific legal questions or issues, referencing relevant articles of the {law_name}.

- Arguments: Outline primary arguments for both plaintiff and defendant (if applicable) or stakeholders, grounded in the {law_name}.
- Jurisdiction: Specify the EU member state or EU-level jurisdiction and relevant context (e.g., industry, AI system type).

## Constraints:
- Ensure the case aligns with the {law_name}'s provisions.
- Create realistic and complex scenarios; focus on clarity and practical applicability.
- Include sufficient details.

## Output Format:
Return the output in JSON format with only one layer, where the value of the dictionary should be in the format of string text:
{
"parties_involved": "plaintiff, defendant, and other third parties",
"factual_background": "Describe the facts. Do not directly states whether the system is compliant with the {law_name} or not. Even do not explicitly mention {law_name}.",
"legal_issues": "Legal questions or issues.",
"arguments": "Primary arguments for involved parties.",
"jurisdiction": "The official power to make legal decisions."
}
)";

const char* kColdStart = R"(You are a legal expert to investigate the relation between {law_name}'s regulations and the case.

## Task
- Go through a step-by-step reasoning process.
- Investigate why the case is {result} by the regulations.

## Regulations
{regulations}

## Case (Factual Background)
{case}
)";

const char* kExtrapolate = R"(You are a legal expert. Please generate a legal case for {law_name} based on the seed data. The generated case should be {result} by {law_name}.

### Seed
{case}

### Output (in markdown format)
Factual Background: Describe the facts. Do not directly states whether the system is compliant with the {law_name} or not. Even do not explicitly mention {law_name}.
Legal Analyzing: Analyze the factual background and explain why the case is {result} by {law_name}.
)";

// The example answer names only the heading so each full chapter name occurs
// once, inside the list.
const char* kAllocate = R"(You are a legal expert to determine which chapter in {law_name} is related to the case.

### Case (Factual Background)
{case}

### Chapters
{chapters}

### Task
- Go through a step-by-step reasoning process and then provide the final answer.

### Output Format
- Reasoning Process.
- Final Answer in a Box:
boxed{"result": "the chapter name, e.g. Chapter I"}
)";

const char* kJudge = R"(You are a legal expert. Decide whether the case below is prohibited or permitted by the {law_name}.

### Case (Factual Background)
{case}

### Output Format
<think>
step-by-step reasoning grounded in the {law_name}
</think>
A short answer, ending with \boxed{"prohibited"} or \boxed{"permitted"}.
)";

const std::regex& slot_regex() {
  static const std::regex re(R"(\{([a-z_]+)\})");
  return re;
}

std::string result_word(Verdict v) { return std::string(forge::to_string(v)); }

// Text between the first pair of ``` fences, if any.
std::string_view strip_fences(std::string_view raw) {
  auto open = raw.find("```");
  if (open == std::string_view::npos) return raw;
  auto line_end = raw.find('\n', open);
  if (line_end == std::string_view::npos) return raw;
  auto close = raw.find("```", line_end + 1);
  if (close == std::string_view::npos) return raw.substr(line_end + 1);
  return raw.substr(line_end + 1, close - line_end - 1);
}

}  // namespace

std::string_view to_string(TemplateName n) noexcept {
  switch (n) {
    case TemplateName::kBenchmarkGen: return "BENCHMARK_GEN";
    case TemplateName::kColdStart: return "COLD_START";
    case TemplateName::kExtrapolate: return "EXTRAPOLATE";
    case TemplateName::kAllocate: return "ALLOCATE";
    case TemplateName::kJudge: return "JUDGE";
  }
  return "?";
}

TemplateName template_from_string(std::string_view s) {
  for (auto n : {TemplateName::kBenchmarkGen, TemplateName::kColdStart, TemplateName::kExtrapolate,
                 TemplateName::kAllocate, TemplateName::kJudge})
    if (to_lower(s) == to_lower(to_string(n))) return n;
  throw TemplateError("unknown template '" + std::string(s) + "'");
}

std::vector<std::string> PromptTemplate::slots() const {
  std::set<std::string> out;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), slot_regex()); it != std::sregex_iterator(); ++it)
    out.insert((*it)[1]);
  return {out.begin(), out.end()};
}

const PromptTemplate& builtin_template(TemplateName name) {
  static const std::map<TemplateName, PromptTemplate> all{
      {TemplateName::kBenchmarkGen, {TemplateName::kBenchmarkGen, kBenchmarkGen}},
      {TemplateName::kColdStart, {TemplateName::kColdStart, kColdStart}},
      {TemplateName::kExtrapolate, {TemplateName::kExtrapolate, kExtrapolate}},
      {TemplateName::kAllocate, {TemplateName::kAllocate, kAllocate}},
      {TemplateName::kJudge, {TemplateName::kJudge, kJudge}},
  };
  return all.at(name);
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  const auto slots = tmpl.slots();
  for (const auto& s : slots)
    if (!bindings.count(s))
      throw TemplateError("template " + std::string(to_string(tmpl.name)) + ": slot '" + s + "' is not bound");
  for (const auto& [k, v] : bindings)
    if (!std::binary_search(slots.begin(), slots.end(), k))
      throw TemplateError("template " + std::string(to_string(tmpl.name)) + ": binding '" + k +
                          "' has no slot in the template");
  // Single pass so bound values are never re-expanded.
  std::string out;
  auto begin = tmpl.body.cbegin();
  for (auto it = std::sregex_iterator(tmpl.body.begin(), tmpl.body.end(), slot_regex()); it != std::sregex_iterator();
       ++it) {
    out.append(begin, (*it)[0].first);
    out += bindings.at((*it)[1]);
    begin = (*it)[0].second;
  }
  out.append(begin, tmpl.body.cend());
  return out;
}

std::string chapter_list(const Framework& fw) {
  std::string out;
  for (const auto& c : canonical_chapters(fw)) {
    if (!out.empty()) out += "\n\n";
    out += c.full_name;
  }
  return out;
}

Bindings benchmark_bindings(const statute::Seed& seed, Verdict label) {
  return {{"law_name", seed.framework.law_name()}, {"result", result_word(label)}, {"rules", seed.rendered_text}};
}

Bindings cold_start_bindings(const Framework& fw, const std::string& regulations, const std::string& case_text,
                             Verdict label) {
  return {{"law_name", fw.law_name()}, {"result", result_word(label)}, {"regulations", regulations}, {"case", case_text}};
}

Bindings allocate_bindings(const Framework& fw, const std::string& case_text) {
  return {{"law_name", fw.law_name()}, {"case", case_text}, {"chapters", chapter_list(fw)}};
}

Bindings extrapolate_bindings(const Framework& fw, const std::string& seed_text, Verdict label) {
  return {{"law_name", fw.law_name()}, {"result", result_word(label)}, {"case", seed_text}};
}

Bindings judge_bindings(const Framework& fw, const std::string& case_text) {
  return {{"law_name", fw.law_name()}, {"case", case_text}};
}

// --- case records ------------------------------------------------------------------

const std::string& CaseRecord::field(std::string_view name) const {
  if (name == "parties_involved") return parties_involved;
  if (name == "factual_background") return factual_background;
  if (name == "legal_issues") return legal_issues;
  if (name == "arguments") return arguments;
  if (name == "jurisdiction") return jurisdiction;
  throw ValidationError("unknown case field '" + std::string(name) + "'", {std::string(name)});
}

std::string CaseRecord::compute_id() const {
  std::string buf = seed_id + '\x1f' + result_word(label);
  for (const char* f : kCaseFields) buf += '\x1f' + field(f);
  return sha256_hex(buf);
}

std::string CaseRecord::chapter_id() const { return chapter_of_node(seed_id).value_or(""); }

Json CaseRecord::narrative_json() const {
  Json j = Json::object();
  for (const char* f : kCaseFields) j[f] = field(f);
  return j;
}

Json CaseRecord::to_json() const {
  Json j{{"case_id", case_id},         {"framework", framework.slug()}, {"seed_id", seed_id},
         {"label", result_word(label)}, {"generator", generator},       {"created_at", created_at}};
  for (const char* f : kCaseFields) j[f] = field(f);
  return j;
}

CaseRecord CaseRecord::from_json(const Json& j) {
  std::vector<std::string> bad;
  for (const char* k : {"framework", "seed_id", "label"})
    if (!j.contains(k) || !j[k].is_string()) bad.emplace_back(k);
  for (const char* f : kCaseFields)
    if (!j.contains(f) || !j[f].is_string() || is_blank(j[f].get<std::string>())) bad.emplace_back(f);
  if (!bad.empty()) throw ValidationError("case record has missing or invalid fields", bad);
  CaseRecord r;
  r.framework = Framework::from_string(j["framework"].get<std::string>());
  r.seed_id = j["seed_id"].get<std::string>();
  r.label = parse_verdict(j["label"].get<std::string>());
  r.parties_involved = j["parties_involved"].get<std::string>();
  r.factual_background = j["factual_background"].get<std::string>();
  r.legal_issues = j["legal_issues"].get<std::string>();
  r.arguments = j["arguments"].get<std::string>();
  r.jurisdiction = j["jurisdiction"].get<std::string>();
  r.generator = j.value("generator", "");
  r.created_at = j.value("created_at", "");
  r.case_id = j.contains("case_id") && j["case_id"].is_string() ? j["case_id"].get<std::string>() : r.compute_id();
  return r;
}

CaseRecord parse_case_json(std::string_view raw, const Framework& fw, const std::string& seed_id, Verdict label,
                           const std::string& generator) {
  // Outermost braces of the whole text first, so fence-like runs inside a
  // value survive; fall back to the fenced block.
  Json j;
  for (std::string_view body : {raw, strip_fences(raw)}) {
    auto open = body.find('{');
    auto close = body.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) continue;
    j = Json::parse(body.substr(open, close - open + 1), nullptr, false);
    if (!j.is_discarded() && j.is_object()) break;
  }
  if (j.is_discarded() || !j.is_object()) throw ValidationError("no JSON object found in response");

  std::vector<std::string> bad;
  for (const char* f : kCaseFields)
    if (!j.contains(f) || !j[f].is_string() || is_blank(j[f].get<std::string>())) bad.emplace_back(f);
  for (const auto& [k, v] : j.items())
    if (std::find_if(std::begin(kCaseFields), std::end(kCaseFields), [&](const char* f) { return k == f; }) ==
        std::end(kCaseFields))
      bad.push_back(k);
  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    throw ValidationError("case JSON must hold exactly the five string fields; offending: " + list, bad);
  }
  CaseRecord r;
  r.framework = fw;
  r.seed_id = seed_id;
  r.label = label;
  r.parties_involved = j["parties_involved"].get<std::string>();
  r.factual_background = j["factual_background"].get<std::string>();
  r.legal_issues = j["legal_issues"].get<std::string>();
  r.arguments = j["arguments"].get<std::string>();
  r.jurisdiction = j["jurisdiction"].get<std::string>();
  r.generator = generator;
  r.created_at = utc_timestamp();
  r.case_id = r.compute_id();
  return r;
}

// --- datasets ----------------------------------------------------------------------

std::string_view to_string(Split s) noexcept { return s == Split::kTrain ? "TRAIN" : "TEST"; }

std::string split_manifest_path(const std::string& dataset_path) {
  std::filesystem::path p(dataset_path);
  return (p.parent_path() / (p.stem().string() + ".split.json")).string();
}

Json split_manifest(const Dataset& ds) {
  Json j = Json::object();
  for (const auto& [id, s] : ds.split_assignment) j[id] = std::string(to_string(s));
  return j;
}

void apply_split_manifest(Dataset& ds, const Json& manifest) {
  if (!manifest.is_object()) throw ValidationError("split manifest must be a JSON object");
  std::set<std::string> ids;
  for (const auto& r : ds.records) ids.insert(r.case_id);
  ds.split_assignment.clear();
  std::vector<std::string> bad;
  for (const auto& [id, v] : manifest.items()) {
    if (!ids.count(id) || !v.is_string() || (v != "TRAIN" && v != "TEST")) {
      bad.push_back(id);
      continue;
    }
    ds.split_assignment[id] = v == "TRAIN" ? Split::kTrain : Split::kTest;
  }
  if (!bad.empty()) throw ValidationError("split manifest has unknown ids or values", bad);
}

Dataset read_dataset(const std::string& path) {
  Dataset ds;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      ds.records.push_back(CaseRecord::from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": record " + std::to_string(line) + ": " + e.what(), e.offending());
    }
  }
  if (auto m = split_manifest_path(path); std::filesystem::exists(m)) apply_split_manifest(ds, Json::parse(read_file(m)));
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::vector<Json> rows;
  rows.reserve(ds.records.size());
  for (const auto& r : ds.records) rows.push_back(r.to_json());
  write_jsonl(path, rows);
  if (!ds.split_assignment.empty()) write_file(split_manifest_path(path), split_manifest(ds).dump(2) + "\n");
}

BuildResult build_benchmark(std::span<const statute::Seed> seeds, const ClientConfig& config,
                            const BuildOptions& options) {
  if (seeds.empty()) throw ValidationError("no seeds to generate from");
  if (options.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  const Framework fw = seeds.front().framework;
  for (const auto& s : seeds)
    if (!(s.framework == fw))
      throw ValidationError("seed " + s.seed_id + " belongs to " + s.framework.slug() + ", batch is " + fw.slug(),
                            {s.seed_id});

  ChatClient client(config);
  const std::size_t jobs = seeds.size() * 2;
  std::vector<std::optional<CaseRecord>> results(jobs);
  std::vector<std::vector<Json>> job_rejects(jobs);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;

  parallel_for(jobs, static_cast<std::size_t>(config.max_parallel), [&](std::size_t i) {
    const auto& seed = seeds[i / 2];
    const Verdict label = i % 2 == 0 ? Verdict::kProhibited : Verdict::kPermitted;
    const std::string prompt = render_prompt(builtin_template(TemplateName::kBenchmarkGen), benchmark_bindings(seed, label));
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
      std::string raw;
      try {
        raw = client.complete(prompt);
        results[i] = parse_case_json(raw, fw, seed.seed_id, label, config.model_name);
        break;
      } catch (const Error& e) {
        Json rej{{"seed_id", seed.seed_id}, {"label", result_word(label)}, {"attempt", attempt},
                 {"kind", e.kind()},         {"error", e.what()},          {"final", attempt == options.max_attempts}};
        if (!raw.empty()) rej["raw_response"] = raw;
        job_rejects[i].push_back(std::move(rej));
      }
    }
    const std::size_t d = ++done;
    if (options.on_progress) {
      std::lock_guard lk(progress_mu);
      options.on_progress(d, jobs);
    }
  });

  BuildResult out;
  out.requested = jobs;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < jobs; ++i) {
    for (auto& r : job_rejects[i]) out.rejects.push_back(std::move(r));
    if (!results[i]) {
      ++out.failed_jobs;
      continue;
    }
    if (!seen.insert(results[i]->case_id).second) {
      ++out.failed_jobs;
      out.rejects.push_back({{"seed_id", results[i]->seed_id}, {"label", result_word(results[i]->label)},
                             {"kind", "duplicate"}, {"error", "duplicate case id " + results[i]->case_id},
                             {"final", true}});
      continue;
    }
    out.dataset.records.push_back(std::move(*results[i]));
  }
  if (!options.rejects_path.empty()) write_jsonl(options.rejects_path, out.rejects);

  Json cfg = config.to_json();
  out.dataset.metadata = Json{{"framework", fw.slug()},
                              {"seeds", seeds.size()},
                              {"requested", jobs},
                              {"accepted", out.dataset.records.size()},
                              {"failed_jobs", out.failed_jobs},
                              {"rejected_attempts", out.rejects.size()},
                              {"max_attempts", options.max_attempts},
                              {"client", cfg}};
  if (out.dataset.records.empty())
    throw PipelineError("all " + std::to_string(jobs) + " generation requests failed; rejects log: " +
                        (options.rejects_path.empty() ? std::string("(in memory)") : options.rejects_path));
  return out;
}

Dataset split_dataset(Dataset ds, double ratio, std::uint64_t rng_seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie strictly between 0 and 1");
  if (ds.records.empty()) throw ValidationError("cannot split an empty dataset");

  // framework -> label -> case ids
  std::map<std::string, std::array<std::vector<std::string>, 2>> strata;
  for (const auto& r : ds.records) strata[r.framework.slug()][r.label == Verdict::kProhibited ? 0 : 1].push_back(r.case_id);

  ds.split_assignment.clear();
  ds.rng_seed = rng_seed;
  for (auto& [fw, labels] : strata) {
    const std::size_t n = labels[0].size() + labels[1].size();
    const auto target = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> frac{};
    std::size_t assigned = 0;
    for (int l = 0; l < 2; ++l) {
      const double exact = ratio * static_cast<double>(labels[l].size());
      quota[l] = static_cast<std::size_t>(std::floor(exact));
      frac[l] = exact - std::floor(exact);
      assigned += quota[l];
    }
    // Largest remainder; ties go to the first label.
    std::array<int, 2> order{0, 1};
    if (frac[1] > frac[0]) std::swap(order[0], order[1]);
    for (int k = 0; k < 2 && assigned < target; ++k)
      if (quota[order[k]] < labels[order[k]].size()) {
        ++quota[order[k]];
        ++assigned;
      }

    for (int l = 0; l < 2; ++l) {
      auto& ids = labels[l];
      std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        const auto ha = stable_hash64(a, rng_seed), hb = stable_hash64(b, rng_seed);
        return ha != hb ? ha < hb : a < b;
      });
      for (std::size_t i = 0; i < ids.size(); ++i)
        ds.split_assignment[ids[i]] = i < quota[l] ? Split::kTrain : Split::kTest;
    }
  }
  ds.metadata["split"] = Json{{"ratio", ratio}, {"rng_seed", rng_seed}};
  return ds;
}

std::vector<eval::PredictionRecord> predict_verdicts(std::span<const CaseRecord> cases, const ClientConfig& config) {
  ChatClient client(config);
  std::vector<eval::PredictionRecord> out(cases.size());
  parallel_for(cases.size(), static_cast<std::size_t>(config.max_parallel), [&](std::size_t i) {
    const auto& c = cases[i];
    const std::string prompt =
        render_prompt(builtin_template(TemplateName::kJudge), judge_bindings(c.framework, c.factual_background));
    std::string raw = client.complete(prompt);
    auto& p = out[i];
    p.case_id = c.case_id;
    p.framework = c.framework;
    p.chapter_id = c.chapter_id();
    p.gold = c.label;
    p.predicted = reward::parse_response(raw).verdict;
    p.raw_response = std::move(raw);
  });
  return out;
}

}  // namespace forge::casegen
