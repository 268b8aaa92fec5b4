#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "forge/annotation.hpp"
#include "forge/casegen.hpp"
#include "forge/chapters.hpp"
#include "forge/eval.hpp"
#include "forge/extrapolation.hpp"
#include "forge/grpo.hpp"
#include "forge/reward.hpp"
#include "forge/statute.hpp"

namespace forge::cli {
namespace {

namespace fs = std::filesystem;

// --- configuration -----------------------------------------------------------------

const std::set<std::string> kGrpoKeys{"group_size",         "clip_epsilon", "kl_beta",         "learning_rate",
                                      "repetition_penalty", "std_floor",    "epochs_per_batch"};

// Sections are kept as JSON overlays on the library defaults so the manifest
// can record exactly what was set and flags can be folded in afterwards.
struct RunConfig {
  Json client = Json::object();
  Json reward = Json::object();
  Json grpo = Json::object();
  std::map<std::string, std::string> paths;
  std::optional<std::uint64_t> rng_seed;

  static RunConfig load(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    Json j = Json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config file is not a JSON object: " + path);
    RunConfig c;
    for (const auto& [k, v] : j.items()) {
      if (k == "client" || k == "reward" || k == "grpo") {
        if (!v.is_object()) throw ConfigError("config section '" + k + "' must be an object");
        (k == "client" ? c.client : k == "reward" ? c.reward : c.grpo) = v;
      } else if (k == "paths") {
        if (!v.is_object()) throw ConfigError("config section 'paths' must be an object");
        for (const auto& [pk, pv] : v.items()) {
          if (!pv.is_string()) throw ConfigError("paths." + pk + " must be a string");
          c.paths[pk] = pv.get<std::string>();
        }
      } else if (k == "rng_seed") {
        if (!v.is_number_unsigned()) throw ConfigError("rng_seed must be a non-negative integer");
        c.rng_seed = v.get<std::uint64_t>();
      } else {
        throw ConfigError("unknown config key '" + k + "'");
      }
    }
    c.check();
    return c;
  }

  // Key sets and value ranges; cheap enough to run after every override.
  void check() const {
    const Json known = ClientConfig{}.to_json();
    for (const auto& [k, v] : client.items())
      if (!known.contains(k)) throw ConfigError("unknown client config key '" + k + "'");
    for (const auto& [k, v] : reward.items())
      if (k != "alpha") throw ConfigError("unknown reward config key '" + k + "'");
    for (const auto& [k, v] : grpo.items())
      if (!kGrpoKeys.count(k)) throw ConfigError("unknown grpo config key '" + k + "'");
    reward_config().validate();
    grpo_config(grpo::GrpoConfig{}).validate();
  }

  ClientConfig client_config() const {
    Json merged = ClientConfig{}.to_json();
    for (const auto& [k, v] : client.items()) merged[k] = v;
    return ClientConfig::from_json(merged);
  }

  reward::RewardConfig reward_config() const {
    reward::RewardConfig r;
    try {
      if (reward.contains("alpha")) r.alpha = reward["alpha"].get<double>();
    } catch (const Json::exception&) {
      throw ConfigError("reward.alpha must be a number");
    }
    return r;
  }

  grpo::GrpoConfig grpo_config(grpo::GrpoConfig base) const {
    try {
      for (const auto& [k, v] : grpo.items()) {
        if (k == "group_size") base.group_size = v.get<std::size_t>();
        else if (k == "clip_epsilon") base.clip_epsilon = v.get<double>();
        else if (k == "kl_beta") base.kl_beta = v.get<double>();
        else if (k == "learning_rate") base.learning_rate = v.get<double>();
        else if (k == "repetition_penalty") base.repetition_penalty = v.get<double>();
        else if (k == "std_floor") base.std_floor = v.get<double>();
        else if (k == "epochs_per_batch") base.epochs_per_batch = v.get<int>();
      }
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("grpo config: ") + e.what());
    }
    return base;
  }

  Json to_json() const {
    Json p = Json::object();
    for (const auto& [k, v] : paths) p[k] = v;
    Json j{{"client", client}, {"reward", reward}, {"grpo", grpo}, {"paths", p}};
    j["rng_seed"] = rng_seed ? Json(*rng_seed) : Json(nullptr);
    return j;
  }
};

struct Context {
  std::string command;
  std::vector<std::string> args;
  RunConfig config;
  std::istream& in;
  std::ostream& out;
};

std::string data_dir() {
  if (const char* env = std::getenv("FORGE_DATA_DIR"); env && *env) return env;
  return FORGE_DATA_DIR;
}

std::string bundled_statute(const Framework& fw) {
  std::string name = fw.slug();
  std::replace(name.begin(), name.end(), '-', '_');
  return data_dir() + "/statutes/" + name + ".statute";
}

// Flag first, then config paths.<key>, then the fallback.
std::string resolve_path(const std::optional<std::string>& flag, const RunConfig& cfg, const std::string& key,
                         const std::string& fallback = "") {
  if (flag) return *flag;
  if (auto it = cfg.paths.find(key); it != cfg.paths.end()) return it->second;
  return fallback;
}

const std::string& require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
  return path;
}

std::string file_digest(const std::string& path) { return sha256_hex(read_file(path)); }

// <artifact>.manifest.json: enough to re-run the producing command.
void write_manifest(const Context& ctx, const std::string& artifact, const std::vector<std::string>& inputs,
                    Json extra = Json::object()) {
  const Json effective = ctx.config.to_json();
  Json in = Json::object();
  for (const auto& p : inputs)
    if (!p.empty() && fs::is_regular_file(p)) in[p] = file_digest(p);
  Json m{{"tool", "forge"},
         {"version", FORGE_VERSION},
         {"command", ctx.command},
         {"argv", ctx.args},
         {"config", effective},
         {"config_hash", sha256_hex(effective.dump())},
         {"inputs", in},
         {"artifact", {{"path", artifact}, {"sha256", fs::is_regular_file(artifact) ? file_digest(artifact) : ""}}},
         {"created_at", utc_timestamp()}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_file(artifact + ".manifest.json", m.dump(2) + "\n");
}

void emit(const Context& ctx, const Json& j) { ctx.out << j.dump(2) << '\n'; }

// Client flags shared by every subcommand that talks to a model.
struct ClientFlags {
  std::optional<std::string> base_url, model;
  std::optional<double> temperature;
  std::optional<int> max_parallel, max_tokens, max_retries;

  void attach(CLI::App* app) {
    app->add_option("--base-url", base_url, "Chat-completions endpoint root");
    app->add_option("--model", model, "Model name sent with each request");
    app->add_option("--temperature", temperature);
    app->add_option("--max-parallel", max_parallel);
    app->add_option("--max-tokens", max_tokens);
    app->add_option("--max-retries", max_retries);
  }
  void fold(RunConfig& c) const {
    if (base_url) c.client["base_url"] = *base_url;
    if (model) c.client["model_name"] = *model;
    if (temperature) c.client["temperature"] = *temperature;
    if (max_parallel) c.client["max_parallel"] = *max_parallel;
    if (max_tokens) c.client["max_tokens"] = *max_tokens;
    if (max_retries) c.client["max_retries"] = *max_retries;
  }
};

template <class T>
void truncate_to(std::vector<T>& v, std::optional<std::size_t> limit) {
  if (limit && v.size() > *limit) v.erase(v.begin() + static_cast<std::ptrdiff_t>(*limit), v.end());
}

// --- subcommands -------------------------------------------------------------------

struct ParseStatuteOpts {
  std::optional<std::string> input, framework, out;
};

void cmd_parse_statute(Context& ctx, const ParseStatuteOpts& o) {
  const auto input = resolve_path(o.input, ctx.config, "statute");
  require_file(input, "statute");
  std::optional<Framework> fw;
  if (o.framework) fw = Framework::from_string(*o.framework);
  auto tree = statute::parse_statute(read_file(input), fw);
  Json summary{{"framework", tree.framework().slug()},
               {"nodes", tree.node_count()},
               {"leaves", tree.leaf_count()},
               {"paths", statute::enumerate_paths(tree).size()}};
  if (o.out) {
    write_file(*o.out, statute::serialize_statute(tree));
    write_manifest(ctx, *o.out, {input});
    summary["out"] = *o.out;
  }
  emit(ctx, summary);
}

struct SeedsOpts {
  std::string framework;
  std::optional<std::string> statute, out;
};

void cmd_seeds(Context& ctx, const SeedsOpts& o) {
  const auto fw = Framework::from_string(o.framework);
  const auto src = resolve_path(o.statute, ctx.config, "statute", bundled_statute(fw));
  require_file(src, "statute");
  auto tree = statute::parse_statute(read_file(src), fw);
  auto seeds = statute::build_seeds(tree);
  const auto out = resolve_path(o.out, ctx.config, "seeds", "seeds.jsonl");
  statute::write_seeds(out, seeds);
  write_manifest(ctx, out, {src});
  emit(ctx, Json{{"framework", fw.slug()}, {"seeds", seeds.size()}, {"out", out}});
}

struct GenerateOpts {
  std::string framework;
  std::optional<std::string> seeds, out, rejects;
  std::optional<std::size_t> limit;
  ClientFlags client;
};

void cmd_generate(Context& ctx, const GenerateOpts& o) {
  const auto fw = Framework::from_string(o.framework);
  const auto seeds_path = resolve_path(o.seeds, ctx.config, "seeds", "seeds.jsonl");
  require_file(seeds_path, "seeds");
  auto seeds = statute::read_seeds(seeds_path);
  std::vector<std::string> foreign;
  for (const auto& s : seeds)
    if (!(s.framework == fw)) foreign.push_back(s.seed_id);
  if (!foreign.empty())
    throw ValidationError(std::to_string(foreign.size()) + " seed(s) do not belong to " + fw.slug(), foreign);
  truncate_to(seeds, o.limit);

  const auto out = resolve_path(o.out, ctx.config, "dataset", "cases.jsonl");
  casegen::BuildOptions opts;
  opts.rejects_path = o.rejects.value_or(out + ".rejects.jsonl");
  auto result = casegen::build_benchmark(seeds, ctx.config.client_config(), opts);
  casegen::write_dataset(out, result.dataset);
  Json stats{{"requested", result.requested},
             {"accepted", result.dataset.records.size()},
             {"failed_jobs", result.failed_jobs},
             {"rejected_attempts", result.rejects.size()}};
  write_manifest(ctx, out, {seeds_path}, Json{{"metadata", result.dataset.metadata}, {"counts", stats}});
  stats["out"] = out;
  stats["rejects"] = opts.rejects_path;
  emit(ctx, stats);
}

struct SplitOpts {
  std::optional<std::string> dataset, out;
  double ratio = 0.5;
  std::optional<std::uint64_t> rng_seed;
};

void cmd_split(Context& ctx, const SplitOpts& o) {
  const auto in = resolve_path(o.dataset, ctx.config, "dataset", "cases.jsonl");
  require_file(in, "dataset");
  if (!(o.ratio > 0.0 && o.ratio < 1.0)) throw ConfigError("--ratio must lie strictly between 0 and 1");
  if (o.rng_seed) ctx.config.rng_seed = o.rng_seed;
  const std::uint64_t seed = ctx.config.rng_seed.value_or(42);
  ctx.config.rng_seed = seed;
  const std::string input_digest = file_digest(in);

  auto ds = casegen::split_dataset(casegen::read_dataset(in), o.ratio, seed);
  const auto out = o.out.value_or(in);
  casegen::write_dataset(out, ds);

  Json counts = Json::object();
  for (const auto& r : ds.records) {
    auto& slot = counts[r.framework.slug()][std::string(forge::to_string(r.label))][std::string(
        casegen::to_string(ds.split_assignment.at(r.case_id)))];
    slot = slot.is_null() ? 1 : slot.get<int>() + 1;
  }
  // The input may have been overwritten in place, so its digest is taken first.
  write_manifest(ctx, out, {}, Json{{"inputs", {{in, input_digest}}}, {"ratio", o.ratio}, {"split_manifest", casegen::split_manifest_path(out)}});
  emit(ctx, Json{{"out", out}, {"split_manifest", casegen::split_manifest_path(out)}, {"counts", counts}});
}

struct RewardOpts {
  std::optional<std::string> gold, input, out;
  std::optional<double> alpha;
  bool batch = false;
};

void cmd_reward(Context& ctx, const RewardOpts& o) {
  if (o.alpha) ctx.config.reward["alpha"] = *o.alpha;
  ctx.config.check();
  const auto cfg = ctx.config.reward_config();
  std::string text;
  if (o.input) {
    text = read_file(require_file(*o.input, "input"));
  } else {
    text.assign(std::istreambuf_iterator<char>(ctx.in), std::istreambuf_iterator<char>());
  }

  if (!o.batch) {
    if (!o.gold) throw ConfigError("--gold is required unless --batch is given");
    auto b = reward::total_reward(text, eval::parse_gold_label(*o.gold), cfg);
    if (o.out) {
      write_file(*o.out, b.to_json().dump(2) + "\n");
      write_manifest(ctx, *o.out, {o.input.value_or("")});
    }
    emit(ctx, b.to_json());
    return;
  }

  std::vector<Json> rows;
  std::istringstream lines(text);
  std::string line;
  std::size_t n = 0;
  double sum = 0.0;
  while (std::getline(lines, line)) {
    ++n;
    if (is_blank(line)) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("response") || !j["response"].is_string())
      throw ValidationError("batch line " + std::to_string(n) + " is not {response, gold}");
    std::string gold;
    if (j.contains("gold") && j["gold"].is_string()) gold = j["gold"].get<std::string>();
    else if (o.gold) gold = *o.gold;
    else throw ValidationError("batch line " + std::to_string(n) + " has no gold label", {"gold"});
    auto b = reward::total_reward(j["response"].get<std::string>(), eval::parse_gold_label(gold), cfg);
    Json row = b.to_json();
    row["line"] = n;
    sum += b.total;
    rows.push_back(std::move(row));
  }
  if (o.out) {
    write_jsonl(*o.out, rows);
    write_manifest(ctx, *o.out, {o.input.value_or("")});
  }
  for (const auto& r : rows) ctx.out << r.dump() << '\n';
  if (!o.out) return;
  emit(ctx, Json{{"scored", rows.size()}, {"mean_total", rows.empty() ? 0.0 : sum / static_cast<double>(rows.size())}});
}

struct GrpoOpts {
  int steps = 500;
  std::optional<std::size_t> group_size;
  std::optional<double> alpha, learning_rate;
  std::optional<std::uint64_t> rng_seed;
  std::optional<std::string> metrics;
};

void cmd_grpo_demo(Context& ctx, const GrpoOpts& o) {
  if (o.steps <= 0) throw ConfigError("--steps must be positive");
  if (o.group_size) ctx.config.grpo["group_size"] = *o.group_size;
  if (o.learning_rate) ctx.config.grpo["learning_rate"] = *o.learning_rate;
  if (o.alpha) ctx.config.reward["alpha"] = *o.alpha;
  if (o.rng_seed) ctx.config.rng_seed = o.rng_seed;
  ctx.config.check();

  grpo::ToyVerdictTask task;
  task.alpha = ctx.config.reward_config().alpha;
  auto cfg = ctx.config.grpo_config(grpo::ToyVerdictTask::demo_config());
  cfg.validate();
  grpo::DemoOptions opts;
  opts.steps = o.steps;
  opts.seed = ctx.config.rng_seed.value_or(7);
  ctx.config.rng_seed = opts.seed;

  auto metrics = grpo::run_toy_demo(task, cfg, opts);
  const auto out = resolve_path(o.metrics, ctx.config, "metrics", "grpo_metrics.jsonl");
  std::vector<Json> rows;
  for (const auto& m : metrics) rows.push_back(m.to_json());
  write_jsonl(out, rows);
  write_manifest(ctx, out, {}, Json{{"grpo", cfg.to_json()}});

  Json summary{{"steps", metrics.size()}, {"metrics", out}, {"final_mean_reward", metrics.back().mean_reward}};
  auto hit = std::find_if(metrics.begin(), metrics.end(), [](const auto& m) { return m.mean_reward >= 0.9; });
  summary["first_step_reaching_0.9"] = hit == metrics.end() ? Json(nullptr) : Json(hit->step);
  emit(ctx, summary);
}

struct EvalOpts {
  std::optional<std::string> pred, report, framework, dataset;
  std::string split = "TEST";
  bool exclude_abstains = false;
  ClientFlags client;
};

void cmd_eval(Context& ctx, const EvalOpts& o) {
  const auto pred_path = resolve_path(o.pred, ctx.config, "pred", "preds.jsonl");
  std::vector<std::string> inputs;

  // With --dataset the model under test is queried first and its verdicts
  // become the predictions file.
  if (o.dataset) {
    require_file(*o.dataset, "dataset");
    const auto split = to_lower(o.split);
    if (split != "test" && split != "train" && split != "all") throw ConfigError("--split must be TEST, TRAIN or ALL");
    auto ds = casegen::read_dataset(*o.dataset);
    std::vector<casegen::CaseRecord> chosen;
    for (const auto& r : ds.records) {
      if (split == "all") {
        chosen.push_back(r);
        continue;
      }
      auto it = ds.split_assignment.find(r.case_id);
      if (it == ds.split_assignment.end())
        throw ValidationError("dataset has no split assignment for " + r.case_id + "; run `forge split` first", {r.case_id});
      if ((it->second == casegen::Split::kTest) == (split == "test")) chosen.push_back(r);
    }
    if (chosen.empty()) throw ValidationError("no cases in split " + o.split);
    auto preds = casegen::predict_verdicts(chosen, ctx.config.client_config());
    std::vector<Json> rows;
    for (const auto& p : preds) rows.push_back(p.to_json());
    write_jsonl(pred_path, rows);
    write_manifest(ctx, pred_path, {*o.dataset, casegen::split_manifest_path(*o.dataset)}, Json{{"split", o.split}});
    inputs.push_back(*o.dataset);
  }

  require_file(pred_path, "predictions");
  inputs.push_back(pred_path);
  std::vector<eval::PredictionRecord> records;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(pred_path)) {
    ++line;
    try {
      records.push_back(eval::PredictionRecord::from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError(pred_path + ": record " + std::to_string(line) + ": " + e.what(), e.offending());
    }
  }
  if (records.empty()) throw ValidationError("no predictions in " + pred_path);
  if (o.framework) {
    const auto fw = Framework::from_string(*o.framework);
    std::vector<std::string> bad;
    for (const auto& r : records)
      if (!(r.framework == fw)) bad.push_back(r.case_id);
    if (!bad.empty())
      throw ValidationError(std::to_string(bad.size()) + " prediction(s) are not for framework " + fw.slug(), bad);
  }

  auto cls = eval::score_predictions(records, eval::ScoreOptions{o.exclude_abstains});
  std::map<std::string, std::vector<eval::PredictionRecord>> by_fw;
  for (const auto& r : records) by_fw[r.framework.slug()].push_back(r);
  Json chapters = Json::object();
  ctx.out << eval::format_classification_table(cls) << '\n';
  for (const auto& [slug, recs] : by_fw) {
    auto rep = eval::per_chapter_report(recs);
    chapters[slug] = rep.to_json();
    ctx.out << eval::format_chapter_table(recs.front().framework, {{"model", rep}}) << '\n';
  }
  if (o.report) {
    write_file(*o.report, Json{{"classification", cls.to_json()}, {"chapters", chapters}}.dump(2) + "\n");
    write_manifest(ctx, *o.report, inputs);
  }
}

struct DistributionOpts {
  std::optional<std::string> alloc, csv, report;
  std::string framework;
  bool reparse = false;
};

void cmd_distribution(Context& ctx, const DistributionOpts& o) {
  const auto path = resolve_path(o.alloc, ctx.config, "alloc");
  require_file(path, "allocations");
  const auto fw = Framework::from_string(o.framework);
  std::vector<std::optional<std::string>> chapters;
  std::vector<std::string> foreign;
  for (const auto& j : read_jsonl(path)) {
    auto r = extrapolation::AllocationResult::from_json(j);
    if (!(r.framework == fw)) foreign.push_back(r.item_ref);
    chapters.push_back(o.reparse ? extrapolation::parse_allocation(r.raw_response, fw) : r.chapter_id);
  }
  if (!foreign.empty())
    throw ValidationError(std::to_string(foreign.size()) + " allocation(s) are not for framework " + fw.slug(), foreign);
  auto rep = eval::chapter_distribution(chapters, fw);
  ctx.out << eval::format_distribution_table(rep) << '\n';
  if (o.csv) {
    write_file(*o.csv, rep.to_csv());
    write_manifest(ctx, *o.csv, {path});
  }
  if (o.report) {
    write_file(*o.report, rep.to_json().dump(2) + "\n");
    write_manifest(ctx, *o.report, {path});
  }
}

struct SourceOpts {
  std::string source, framework;
  std::optional<std::string> input, mapping, out, label;
  std::optional<std::size_t> limit;
  ClientFlags client;
};

std::pair<extrapolation::IngestResult, std::vector<std::string>> ingest(const Context& ctx, const SourceOpts& o) {
  const auto src = extrapolation::SafetySource::from_string(o.source);
  const auto input = resolve_path(o.input, ctx.config, "input");
  require_file(input, "input");
  std::vector<std::string> inputs{input};
  auto mapping = extrapolation::default_mapping(src);
  if (o.mapping) {
    require_file(*o.mapping, "mapping");
    Json m = Json::parse(read_file(*o.mapping), nullptr, false);
    if (m.is_discarded()) throw ConfigError("mapping file is not JSON: " + *o.mapping);
    mapping = extrapolation::IngestMapping::from_json(m);
    inputs.push_back(*o.mapping);
  }
  auto result = extrapolation::ingest_safety_dataset(input, src, mapping);
  truncate_to(result.items, o.limit);
  return {std::move(result), inputs};
}

void cmd_allocate(Context& ctx, const SourceOpts& o) {
  const auto fw = Framework::from_string(o.framework);
  auto [ingested, inputs] = ingest(ctx, o);
  const auto cfg = ctx.config.client_config();
  auto results = extrapolation::allocate_batch(ingested.items, fw, cfg);
  const auto out = o.out.value_or(slugify(o.source) + "_" + fw.slug() + ".alloc.jsonl");
  std::vector<Json> rows;
  for (const auto& r : results) rows.push_back(r.to_json());
  write_jsonl(out, rows);
  auto rep = extrapolation::allocation_distribution(results, fw);
  write_manifest(ctx, out, inputs,
                 Json{{"rows_read", ingested.rows_read}, {"ingest_rejects", ingested.rejects}, {"missing_rate", rep.missing_rate}});
  ctx.out << eval::format_distribution_table(rep) << '\n';
}

void cmd_extrapolate(Context& ctx, const SourceOpts& o) {
  const auto fw = Framework::from_string(o.framework);
  std::optional<Verdict> forced;
  if (o.label) forced = eval::parse_gold_label(*o.label);
  auto [ingested, inputs] = ingest(ctx, o);
  auto batch = extrapolation::extrapolate_batch(ingested.items, fw, extrapolation::LabelPolicy{}, forced,
                                                ctx.config.client_config());
  const auto out = o.out.value_or(slugify(o.source) + "_" + fw.slug() + ".cases.jsonl");
  std::vector<Json> rows;
  for (const auto& c : batch.cases) rows.push_back(c.to_json());
  write_jsonl(out, rows);
  const auto rejects = out + ".rejects.jsonl";
  write_jsonl(rejects, batch.rejects);
  write_manifest(ctx, out, inputs, Json{{"rows_read", ingested.rows_read}, {"ingest_rejects", ingested.rejects.size()}});
  emit(ctx, Json{{"out", out}, {"cases", batch.cases.size()}, {"rejects", batch.rejects.size()}, {"rejects_path", rejects}});
}

struct ServeOpts {
  std::optional<std::string> dataset, dir, static_dir, seeds;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void cmd_annotate_serve(Context& ctx, const ServeOpts& o) {
  const auto path = resolve_path(o.dataset, ctx.config, "dataset", "cases.jsonl");
  require_file(path, "dataset");
  auto ds = casegen::read_dataset(path);

  // Seed texts shown beside each case: from --seeds, else the bundled statutes.
  std::map<std::string, std::string> texts;
  std::vector<std::string> inputs{path};
  if (o.seeds) {
    require_file(*o.seeds, "seeds");
    for (const auto& s : statute::read_seeds(*o.seeds)) texts[s.seed_id] = s.rendered_text;
    inputs.push_back(*o.seeds);
  } else {
    std::set<std::string> done;
    for (const auto& r : ds.records) {
      if (r.framework.kind() == Framework::Kind::kCustom || !done.insert(r.framework.slug()).second) continue;
      const auto src = bundled_statute(r.framework);
      if (!fs::exists(src)) continue;
      for (const auto& s : statute::build_seeds(statute::parse_statute(read_file(src), r.framework)))
        texts[s.seed_id] = s.rendered_text;
    }
  }
  const fs::path dir = o.dir.value_or(path + ".annotations");
  annotation::AnnotationStore store(dir, ds.records, std::move(texts));
  std::optional<fs::path> static_dir;
  if (o.static_dir) static_dir = *o.static_dir;
  annotation::AnnotationServer server(store, static_dir);
  const int port = server.bind(o.host, o.port);
  write_manifest(ctx, (dir / "serve").string(), inputs, Json{{"host", o.host}, {"port", port}});
  emit(ctx, Json{{"listening", o.host + ":" + std::to_string(port)}, {"sessions_dir", dir.string()}});
  ctx.out.flush();
  server.listen();
}

struct ReportOpts {
  std::optional<std::string> ratings, events, out;
};

void cmd_report(Context& ctx, const ReportOpts& o) {
  if (o.ratings.has_value() == o.events.has_value()) throw ConfigError("give exactly one of --ratings or --events");
  eval::HumanEvalReport rep;
  std::string input;
  if (o.ratings) {
    input = require_file(*o.ratings, "ratings");
    std::vector<eval::HumanRating> ratings;
    for (const auto& j : read_jsonl(input)) ratings.push_back(eval::HumanRating::from_json(j));
    rep = eval::human_eval_aggregate(ratings);
  } else {
    input = require_file(*o.events, "events");
    std::vector<annotation::RatingEvent> events;
    for (const auto& j : read_jsonl(input)) events.push_back(annotation::RatingEvent::from_json(j));
    rep = annotation::aggregate_events(events);
  }
  ctx.out << eval::format_human_eval_table(rep) << '\n';
  if (o.out) {
    write_file(*o.out, rep.to_json().dump(2) + "\n");
    write_manifest(ctx, *o.out, {input});
  }
}

Json error_json(const std::string& kind, const std::string& message, const std::vector<std::string>& offending = {}) {
  Json e{{"kind", kind}, {"message", message}};
  if (!offending.empty()) e["offending"] = offending;
  return Json{{"error", e}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compliance benchmark and verifier toolkit", "forge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FORGE_VERSION);
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "JSON run configuration; flags override it")->check(CLI::ExistingFile);

  ParseStatuteOpts ps;
  auto* c_ps = app.add_subcommand("parse-statute", "Parse a statute outline and report its shape");
  c_ps->add_option("--input", ps.input, "Statute file");
  c_ps->add_option("--framework", ps.framework);
  c_ps->add_option("--out", ps.out, "Write the normalized outline here");

  SeedsOpts sd;
  auto* c_sd = app.add_subcommand("seeds", "Enumerate root-to-leaf seeds");
  c_sd->add_option("--framework", sd.framework)->required();
  c_sd->add_option("--statute", sd.statute, "Statute file (default: bundled)");
  c_sd->add_option("--out", sd.out);

  GenerateOpts gn;
  auto* c_gn = app.add_subcommand("generate", "Generate prohibited/permitted cases from seeds");
  c_gn->add_option("--framework", gn.framework)->required();
  c_gn->add_option("--seeds", gn.seeds);
  c_gn->add_option("--out", gn.out);
  c_gn->add_option("--rejects", gn.rejects);
  c_gn->add_option("--limit", gn.limit, "Use only the first N seeds");
  gn.client.attach(c_gn);

  SplitOpts sp;
  auto* c_sp = app.add_subcommand("split", "Stratified TRAIN/TEST split");
  c_sp->add_option("--dataset", sp.dataset);
  c_sp->add_option("--out", sp.out, "Default: rewrite the dataset in place");
  c_sp->add_option("--ratio", sp.ratio, "Train fraction");
  c_sp->add_option("--rng-seed", sp.rng_seed);

  RewardOpts rw;
  auto* c_rw = app.add_subcommand("reward", "Score a response (stdin) against a gold verdict");
  c_rw->add_option("--gold", rw.gold);
  c_rw->add_option("--alpha", rw.alpha);
  c_rw->add_option("--input", rw.input, "Read from a file instead of stdin");
  c_rw->add_option("--out", rw.out);
  c_rw->add_flag("--batch", rw.batch, "Input is JSON Lines of {response, gold}");

  GrpoOpts gr;
  auto* c_gr = app.add_subcommand("grpo-demo", "Run GRPO on the tabular verdict task");
  c_gr->add_option("--steps", gr.steps);
  c_gr->add_option("--group-size", gr.group_size);
  c_gr->add_option("--alpha", gr.alpha);
  c_gr->add_option("--learning-rate", gr.learning_rate);
  c_gr->add_option("--rng-seed", gr.rng_seed);
  c_gr->add_option("--metrics", gr.metrics, "Metrics log (JSON Lines)");

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("eval", "Score verdict predictions");
  c_ev->add_option("--pred", ev.pred);
  c_ev->add_option("--report", ev.report);
  c_ev->add_option("--framework", ev.framework, "Require every prediction to be for this framework");
  c_ev->add_option("--dataset", ev.dataset, "Query the model on this dataset first");
  c_ev->add_option("--split", ev.split, "TEST, TRAIN or ALL (with --dataset)");
  c_ev->add_flag("--exclude-abstains", ev.exclude_abstains);
  ev.client.attach(c_ev);

  DistributionOpts ds;
  auto* c_ds = app.add_subcommand("distribution", "Chapter histogram and missing rate of allocations");
  c_ds->add_option("--alloc", ds.alloc);
  c_ds->add_option("--framework", ds.framework)->required();
  c_ds->add_option("--csv", ds.csv);
  c_ds->add_option("--report", ds.report);
  c_ds->add_flag("--reparse", ds.reparse, "Recompute chapters from the raw responses");

  SourceOpts al;
  auto* c_al = app.add_subcommand("allocate", "Allocate external safety items to chapters");
  SourceOpts ex;
  auto* c_ex = app.add_subcommand("extrapolate", "Turn external safety items into compliance cases");
  for (auto [cmd, o] : {std::pair{c_al, &al}, std::pair{c_ex, &ex}}) {
    cmd->add_option("--source", o->source)->required();
    cmd->add_option("--framework", o->framework)->required();
    cmd->add_option("--input", o->input);
    cmd->add_option("--mapping", o->mapping, "Ingestion mapping JSON");
    cmd->add_option("--out", o->out);
    cmd->add_option("--limit", o->limit);
    o->client.attach(cmd);
  }
  c_ex->add_option("--label", ex.label, "Force every case to this verdict");

  ServeOpts sv;
  auto* c_sv = app.add_subcommand("annotate-serve", "Serve the rating API");
  c_sv->add_option("--dataset", sv.dataset);
  c_sv->add_option("--port", sv.port);
  c_sv->add_option("--host", sv.host);
  c_sv->add_option("--dir", sv.dir, "Session storage (default: <dataset>.annotations)");
  c_sv->add_option("--static", sv.static_dir, "Directory of UI assets");
  c_sv->add_option("--seeds", sv.seeds, "Seed texts to show next to cases");

  ReportOpts rp;
  auto* c_rp = app.add_subcommand("report", "Human-evaluation table");
  c_rp->add_option("--ratings", rp.ratings, "Ratings JSON Lines");
  c_rp->add_option("--events", rp.events, "Annotation session event log");
  c_rp->add_option("--out", rp.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << FORGE_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_json("usage_error", e.what()).dump() << '\n';
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Context ctx{sub->get_name(), args, config_path ? RunConfig::load(*config_path) : RunConfig{}, in, out};
    const std::map<CLI::App*, const ClientFlags*> client_flags{
        {c_gn, &gn.client}, {c_ev, &ev.client}, {c_al, &al.client}, {c_ex, &ex.client}};
    if (auto it = client_flags.find(sub); it != client_flags.end()) it->second->fold(ctx.config);
    ctx.config.check();

    if (sub == c_ps) cmd_parse_statute(ctx, ps);
    else if (sub == c_sd) cmd_seeds(ctx, sd);
    else if (sub == c_gn) cmd_generate(ctx, gn);
    else if (sub == c_sp) cmd_split(ctx, sp);
    else if (sub == c_rw) cmd_reward(ctx, rw);
    else if (sub == c_gr) cmd_grpo_demo(ctx, gr);
    else if (sub == c_ev) cmd_eval(ctx, ev);
    else if (sub == c_ds) cmd_distribution(ctx, ds);
    else if (sub == c_al) cmd_allocate(ctx, al);
    else if (sub == c_ex) cmd_extrapolate(ctx, ex);
    else if (sub == c_sv) cmd_annotate_serve(ctx, sv);
    else if (sub == c_rp) cmd_report(ctx, rp);
    return kOk;
  } catch (const ConfigError& e) {
    err << error_json(e.kind(), e.what()).dump() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    err << error_json(e.kind(), e.what(), e.offending()).dump() << '\n';
    return kFailure;
  } catch (const Error& e) {
    err << error_json(e.kind(), e.what()).dump() << '\n';
    return kFailure;
  } catch (const Json::exception& e) {
    err << error_json("parse_error", e.what()).dump() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << error_json("internal_error", e.what()).dump() << '\n';
    return kFailure;
  }
}

}  // namespace forge::cli
