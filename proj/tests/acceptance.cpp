// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "forge/chapters.hpp"
#include "forge/eval.hpp"
#include "forge/extrapolation.hpp"
#include "forge/grpo.hpp"
#include "forge/reward.hpp"
#include "forge/statute.hpp"
#include "support/gradient_instance.hpp"
#include "support/stub_chat.hpp"
#include "test_support.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("forge_accept_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::istringstream in;
  std::ostringstream o, e;
  int code = cli::run_cli(args, in, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

// 1. Seed text for Art. 5(1)(h)(iii) byte-for-byte; paths == leaves on random trees.
Outcome seed_pipeline() {
  Outcome o;
  const auto t0 = Clock::now();
  auto tree = statute::parse_statute(test::read_data("fixtures/eu_ai_act_ch2.statute"));
  auto seeds = statute::build_seeds(tree);
  auto it = std::find_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.seed_id == "eu-ai-act/ch2/art5/p1/h/iii"; });
  o.require(it != seeds.end(), "seed eu-ai-act/ch2/art5/p1/h/iii not produced");
  if (it != seeds.end()) o.require(it->rendered_text == test::kReferenceSeed, "rendered seed differs from the reference text");

  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200 && o.pass; ++i) {
    auto g = test::random_statute(rng);
    auto t = statute::parse_statute(g.source);
    const auto paths = statute::enumerate_paths(t).size();
    o.require(paths == g.leaves && paths == test::count_leaf_lines(g.source),
              "tree " + std::to_string(i) + ": " + std::to_string(paths) + " paths vs " + std::to_string(g.leaves) + " leaves");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, "took " + fmt(secs, 2) + " s");
  if (o.pass) o.detail = "reference seed matches; 200 random trees; " + fmt(secs, 2) + " s";
  return o;
}

// 2. Totals 10/9, 1/9 and 0 on the three canonical fixtures.
Outcome reward_suite() {
  Outcome o;
  const reward::RewardConfig cfg{1.0 / 9.0};
  const auto good = test::read_data("fixtures/reward/well_formed_prohibited.txt");
  const auto bad = test::read_data("fixtures/reward/malformed.txt");
  const double correct = reward::total_reward(good, Verdict::kProhibited, cfg).total;
  const double wrong = reward::total_reward(good, Verdict::kPermitted, cfg).total;
  const double malformed = reward::total_reward(bad, Verdict::kProhibited, cfg).total;
  o.require(std::abs(correct - 10.0 / 9.0) <= 1e-12, "correct: " + fmt(correct, 15));
  o.require(std::abs(wrong - 1.0 / 9.0) <= 1e-12, "wrong: " + fmt(wrong, 15));
  o.require(malformed == 0.0, "malformed: " + fmt(malformed, 15));
  if (o.pass) o.detail = "{" + fmt(correct) + ", " + fmt(wrong) + ", " + fmt(malformed) + "}";
  return o;
}

// 3. Group-relative advantages.
Outcome advantage_math() {
  Outcome o;
  grpo::GrpoConfig cfg;
  const std::vector<double> single{1, 0, 0, 0, 0};
  auto a = grpo::group_advantages(single, cfg).per_rollout;
  o.require(a == std::vector<double>{2.0, -0.5, -0.5, -0.5, -0.5}, "[1,0,0,0,0] did not give [2,-0.5,...] exactly");

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(2, 16);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int g = 0; g < 1000; ++g) {
    std::vector<double> r(size(rng));
    do {
      for (auto& x : r) x = val(rng);
    } while (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; }));
    cfg.group_size = r.size();
    auto adv = grpo::group_advantages(r, cfg).per_rollout;
    double m = 0.0;
    for (double x : adv) m += x;
    m /= static_cast<double>(adv.size());
    double s = 0.0;
    for (double x : adv) s += (x - m) * (x - m);
    s = std::sqrt(s / static_cast<double>(adv.size()));
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(s - 1.0));
  }
  o.require(worst_mean < 1e-9, "max |mean| " + std::to_string(worst_mean));
  o.require(worst_std < 1e-9, "max |std-1| " + std::to_string(worst_std));
  if (o.pass) {
    std::ostringstream d;
    d << "1000 groups; max |mean| " << worst_mean << ", max |std-1| " << worst_std;
    o.detail = d.str();
  }
  return o;
}

// 4. Analytic gradient against central differences.
Outcome gradient_check() {
  Outcome o;
  const auto t0 = Clock::now();
  grpo::GrpoConfig cfg;
  cfg.kl_beta = 0.1;
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t params = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto inst = test::gradient_instance(seed, cfg, 1e-3);
    o.require(inst.policy.vocab_size() == 6 && inst.policy.max_len() == 4, "instance is not vocab-6 / max_len-4");
    auto analytic = grpo::objective_and_gradient(inst.policy, inst.groups, cfg);
    auto& theta = inst.policy.parameters();
    for (std::size_t k = 0; k < theta.size(); ++k, ++params) {
      const double saved = theta[k];
      theta[k] = saved + h;
      const double up = grpo::objective_and_gradient(inst.policy, inst.groups, cfg).report.objective;
      theta[k] = saved - h;
      const double down = grpo::objective_and_gradient(inst.policy, inst.groups, cfg).report.objective;
      theta[k] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = analytic.gradient[k];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst < 1e-4, "max relative error " + std::to_string(worst));
  o.require(secs < 60.0, "took " + fmt(secs, 1) + " s");
  if (o.pass) {
    std::ostringstream d;
    d << params << " parameters; max relative error " << worst << "; " << fmt(secs, 2) << " s";
    o.detail = d.str();
  }
  return o;
}

// 5. Toy GRPO run through the CLI; checks are made on the metrics log it writes.
Outcome toy_convergence() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto dir = scratch("grpo");
  const auto log = (dir / "metrics.jsonl").string();
  std::string err;
  const int code = cli({"grpo-demo", "--steps", "500", "--group-size", "5", "--alpha", "0.1111111111111111",
                        "--rng-seed", "7", "--metrics", log},
                       nullptr, &err);
  o.require(code == 0, "grpo-demo exited " + std::to_string(code) + ": " + err);
  if (!o.pass) return o;
  const auto manifest = Json::parse(read_file(log + ".manifest.json"));
  o.require(manifest["grpo"]["repetition_penalty"].get<double>() == 1.2, "repetition penalty is not 1.2");
  o.require(manifest["grpo"]["group_size"].get<int>() == 5, "group size is not 5");

  auto rows = read_jsonl(log);
  o.require(rows.size() == 500, "expected 500 metric rows");
  int reached = -1;
  double prev = -1.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (reached < 0 && rows[i]["mean_reward"].get<double>() >= 0.9) reached = rows[i]["step"].get<int>();
    if (i < 4) continue;
    double ma = 0.0;
    for (std::size_t k = i - 4; k <= i; ++k) ma += rows[k]["mean_reward"].get<double>() / 5.0;
    if (rows[i]["step"].get<int>() > 100)
      o.require(ma >= prev - 1e-12, "5-step average decreases at step " + rows[i]["step"].dump());
    prev = ma;
  }
  o.require(reached > 0, "mean reward never reached 0.9");
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "took " + fmt(secs, 1) + " s");
  if (o.pass)
    o.detail = "mean reward >= 0.9 at step " + std::to_string(reached) + "; smoothed curve monotone after step 100; " +
               fmt(secs, 2) + " s";
  fs::remove_all(dir);
  return o;
}

// 6. Metrics against a brute-force confusion-matrix oracle; micro chapter average.
Outcome eval_oracle() {
  Outcome o;
  std::mt19937_64 rng(6);
  const auto& chapters = canonical_chapters(Framework::eu_ai_act());
  double worst = 0.0;
  for (int f = 0; f < 100; ++f) {
    std::vector<eval::PredictionRecord> recs(std::uniform_int_distribution<int>(1, 80)(rng));
    for (std::size_t i = 0; i < recs.size(); ++i) {
      auto& r = recs[i];
      r.case_id = "c" + std::to_string(i);
      r.chapter_id = chapters[rng() % chapters.size()].id;
      r.gold = rng() % 2 ? Verdict::kProhibited : Verdict::kPermitted;
      const int p = static_cast<int>(rng() % 5);
      if (p < 2) r.predicted = Verdict::kProhibited;
      else if (p < 4) r.predicted = Verdict::kPermitted;
    }
    auto rep = eval::score_predictions(recs);
    std::size_t correct = 0;
    for (const auto& r : recs) correct += r.predicted && *r.predicted == r.gold;
    auto dev = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    dev(rep.accuracy, 100.0 * static_cast<double>(correct) / static_cast<double>(recs.size()));
    double f1_sum = 0.0;
    for (const auto& pc : rep.per_class) {
      std::size_t tp = 0, predicted = 0, support = 0;
      for (const auto& r : recs) {
        const bool g = r.gold == pc.label, p = r.predicted && *r.predicted == pc.label;
        tp += g && p;
        predicted += p;
        support += g;
      }
      const double prec = predicted ? 100.0 * static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
      const double rec = support ? 100.0 * static_cast<double>(tp) / static_cast<double>(support) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      dev(pc.precision, prec);
      dev(pc.recall, rec);
      dev(pc.f1, f1);
      f1_sum += f1;
    }
    dev(rep.macro_f1, f1_sum / 2.0);
  }
  o.require(worst < 1e-9, "max deviation from oracle " + std::to_string(worst));

  std::vector<eval::PredictionRecord> fixture;
  for (int i = 0; i < 12; ++i) {
    eval::PredictionRecord r;
    r.case_id = "m" + std::to_string(i);
    r.chapter_id = i < 10 ? "eu-ai-act/ch2" : "eu-ai-act/ch3";
    r.gold = Verdict::kProhibited;
    r.predicted = (i < 6 || i >= 10) ? Verdict::kProhibited : Verdict::kPermitted;
    fixture.push_back(r);
  }
  const auto shown = format_fixed(eval::per_chapter_report(fixture).micro_average, 2);
  o.require(shown == "66.67", "micro average shown as " + shown);
  if (o.pass) {
    std::ostringstream d;
    d << "100 fixtures within " << worst << " of the oracle; micro average " << shown;
    o.detail = d.str();
  }
  return o;
}

// 7. Rater means 4.42/4.96/4.96 -> 88.40/99.20/99.20, average 95.60.
Outcome human_eval() {
  Outcome o;
  std::vector<eval::HumanRating> ratings;
  for (const auto& j : read_jsonl(test::data_path("fixtures/human_ratings_reference.jsonl")))
    ratings.push_back(eval::HumanRating::from_json(j));
  auto rep = eval::human_eval_aggregate(ratings);
  const std::vector<std::pair<std::string, std::string>> expect{
      {"student-1", "88.40"}, {"student-2", "99.20"}, {"student-3", "99.20"}};
  const std::vector<double> means{4.42, 4.96, 4.96};
  std::string shown;
  for (std::size_t i = 0; i < expect.size(); ++i) {
    const auto& [rater, want] = expect[i];
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : ratings)
      if (r.rater == rater && r.dimension == "alignment" && r.framework == "eu-ai-act") {
        sum += r.score;
        ++n;
      }
    o.require(n > 0 && std::abs(sum / static_cast<double>(n) - means[i]) < 1e-12, rater + " fixture mean is not " + fmt(means[i], 2));
    auto s = rep.score(rater, "alignment", "eu-ai-act");
    o.require(s && format_fixed(*s, 2) == want, rater + " scored " + (s ? format_fixed(*s, 2) : "nothing"));
    if (s) shown += format_fixed(*s, 2) + "/";
  }
  auto avg = rep.average("alignment", "eu-ai-act");
  o.require(avg && format_fixed(*avg, 2) == "95.60", "average " + (avg ? format_fixed(*avg, 2) : "missing"));
  if (o.pass) o.detail = shown.substr(0, shown.size() - 1) + ", average " + format_fixed(*avg, 2);
  return o;
}

// 8. Missing rates from a 3-of-10 fixture and from recorded allocations.
Outcome missing_rate() {
  Outcome o;
  const auto fw = Framework::eu_ai_act();
  std::vector<std::optional<std::string>> alloc;
  for (int i = 0; i < 7; ++i) alloc.emplace_back("eu-ai-act/ch" + std::to_string(2 + i % 3));
  alloc.emplace_back(std::nullopt);
  alloc.emplace_back("");
  alloc.emplace_back("eu-ai-act/ch99");
  const auto ten = format_fixed(eval::chapter_distribution(alloc, fw).missing_rate, 2);
  o.require(ten == "30.00", "3 of 10 gave " + ten);

  std::string shown;
  for (const auto& [name, want] : std::vector<std::pair<std::string, std::string>>{
           {"aegis2", "19.86"}, {"wildguard", "15.73"}, {"openai_mod", "16.19"}, {"saferlhf", "15.73"}}) {
    std::vector<extrapolation::AllocationResult> results;
    for (const auto& j : read_jsonl(test::data_path("fixtures/allocations/" + name + "_eu-ai-act.jsonl"))) {
      auto r = extrapolation::AllocationResult::from_json(j);
      r.chapter_id = extrapolation::parse_allocation(r.raw_response, fw);  // re-derive from the recorded text
      results.push_back(std::move(r));
    }
    const auto got = format_fixed(extrapolation::allocation_distribution(results, fw).missing_rate, 2);
    o.require(got == want, name + " gave " + got + ", expected " + want);
    shown += " " + name + "=" + got;
  }
  if (o.pass) o.detail = "3/10 -> " + ten + ";" + shown;
  return o;
}

// 9. Seeds -> cases -> split -> verdicts -> eval through the CLI against a loopback stub.
Outcome mock_pipeline() {
  Outcome o;
  const auto t0 = Clock::now();
  testing::StubChatServer stub(testing::scripted_model);
  const auto dir = scratch("e2e");
  auto p = [&](const std::string& n) { return (dir / n).string(); };
  const std::string url = stub.base_url();
  o.require(url.rfind("http://127.0.0.1:", 0) == 0, "stub is not on loopback");
  write_file(p("config.json"), Json{{"client", {{"base_url", url}, {"model_name", "stub"}, {"backoff_base_ms", 1}}},
                                    {"rng_seed", 42}}
                                   .dump());
  const std::vector<std::string> base{"--config", p("config.json")};
  auto step = [&](std::vector<std::string> args) {
    args.insert(args.begin(), base.begin(), base.end());
    std::string out, err;
    const int code = cli(args, &out, &err);
    o.require(code == 0, args[2] + " exited " + std::to_string(code) + ": " + err);
    return out;
  };

  step({"seeds", "--framework", "eu-ai-act", "--out", p("seeds.jsonl")});
  step({"generate", "--framework", "eu-ai-act", "--seeds", p("seeds.jsonl"), "--limit", "4", "--out", p("cases.jsonl")});
  if (!o.pass) return o;
  auto cases = read_jsonl(p("cases.jsonl"));
  std::size_t prohibited = 0;
  for (const auto& c : cases) prohibited += c["label"] == "prohibited";
  o.require(cases.size() == 8 && prohibited == 4, std::to_string(cases.size()) + " cases, " + std::to_string(prohibited) + " prohibited");

  step({"split", "--dataset", p("cases.jsonl"), "--ratio", "0.5"});
  if (!o.pass) return o;
  auto manifest = Json::parse(read_file(p("cases.split.json")));
  std::map<std::string, int> test_per_label;
  for (const auto& c : cases)
    if (manifest.at(c["case_id"].get<std::string>()) == "TEST") ++test_per_label[c["label"].get<std::string>()];
  o.require(test_per_label["prohibited"] == 2 && test_per_label["permitted"] == 2, "split is not 2+2 on TEST");

  const auto before = stub.calls();
  auto out = step({"eval", "--dataset", p("cases.jsonl"), "--split", "TEST", "--pred", p("preds.jsonl"), "--report",
                   p("report.json")});
  if (!o.pass) return o;
  o.require(stub.calls() - before == 4, "expected 4 verdict requests, saw " + std::to_string(stub.calls() - before));
  auto report = Json::parse(read_file(p("report.json")));
  o.require(report["classification"]["total"] == 4, "report does not cover 4 test cases");
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "took " + fmt(secs, 2) + " s");
  if (o.pass)
    o.detail = "8 cases, 4 TEST verdicts, accuracy " + format_fixed(report["classification"]["accuracy"].get<double>(), 2) +
               "%, " + std::to_string(stub.calls()) + " loopback requests, " + fmt(secs, 2) + " s";
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"seed pipeline", seed_pipeline},          {"reward suite", reward_suite},
      {"advantage math", advantage_math},        {"gradient check", gradient_check},
      {"toy GRPO convergence", toy_convergence}, {"eval oracle equivalence", eval_oracle},
      {"human-eval normalization", human_eval},  {"missing rate", missing_rate},
      {"end-to-end mock pipeline", mock_pipeline}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
