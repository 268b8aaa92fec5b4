#include "forge/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "forge/reward.hpp"

namespace forge::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (!(clip_epsilon > 0.0)) throw ConfigError("clip_epsilon must be positive");
  if (!(kl_beta >= 0.0)) throw ConfigError("kl_beta must be non-negative");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(repetition_penalty >= 1.0)) throw ConfigError("repetition_penalty must be >= 1");
  if (!(std_floor > 0.0)) throw ConfigError("std_floor must be positive");
  if (epochs_per_batch < 1) throw ConfigError("epochs_per_batch must be >= 1");
}

Json GrpoConfig::to_json() const {
  return Json{{"group_size", group_size},       {"clip_epsilon", clip_epsilon},
              {"kl_beta", kl_beta},             {"learning_rate", learning_rate},
              {"repetition_penalty", repetition_penalty}, {"std_floor", std_floor},
              {"epochs_per_batch", epochs_per_batch}};
}

AdvantageVector group_advantages(std::span<const double> rewards, const GrpoConfig& config) {
  if (rewards.size() < 2) throw ConfigError("a group needs at least two rewards");
  if (rewards.size() != config.group_size)
    throw ConfigError("group has " + std::to_string(rewards.size()) + " rewards, expected " +
                      std::to_string(config.group_size));
  // Extended precision keeps small rational groups exact after rounding,
  // e.g. [1,0,0,0,0] -> [2, -0.5, ...] rather than 1.9999999999999998.
  const long double n = static_cast<long double>(rewards.size());
  long double mean = 0.0L;
  for (double r : rewards) mean += r;
  mean /= n;
  long double var = 0.0L;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const long double sd = std::sqrt(var / n);
  AdvantageVector adv;
  adv.per_rollout.resize(rewards.size(), 0.0);
  if (sd <= config.std_floor) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i)
    adv.per_rollout[i] = static_cast<double>((rewards[i] - mean) / sd);
  return adv;
}

double token_ratio(double logp_new, double logp_old) { return std::exp(logp_new - logp_old); }

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_penalty(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  // expm1 keeps the estimator non-negative near d = 0.
  return std::expm1(d) - d;
}

namespace {

struct TokenTerms {
  double surrogate;
  double kl;
  bool clipped;
  double d_surrogate;  // d surrogate / d logp_new
  double d_kl;         // d kl / d logp_new
};

TokenTerms token_terms(double lp_new, double lp_old, double lp_ref, double adv, double eps) {
  const double r = token_ratio(lp_new, lp_old);
  const double unclipped = r * adv;
  const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * adv;
  TokenTerms t{};
  t.surrogate = std::min(unclipped, clipped);
  t.clipped = clipped < unclipped;
  t.d_surrogate = t.clipped ? 0.0 : unclipped;
  t.kl = kl_penalty(lp_new, lp_ref);
  t.d_kl = 1.0 - std::exp(lp_ref - lp_new);
  return t;
}

void check_group(const RolloutGroup& group, const GrpoConfig& config) {
  if (group.rollouts.size() != config.group_size)
    throw IntegrityError("group has " + std::to_string(group.rollouts.size()) + " rollouts, expected " +
                         std::to_string(config.group_size));
  for (const auto& r : group.rollouts) {
    const auto n = r.tokens.size();
    if (n == 0) throw IntegrityError("empty rollout");
    if (r.logp_new.size() != n || r.logp_old.size() != n || r.logp_ref.size() != n)
      throw IntegrityError("per-token sequences of a rollout differ in length");
  }
}

std::vector<double> rewards_of(const RolloutGroup& group) {
  std::vector<double> out;
  out.reserve(group.rollouts.size());
  for (const auto& r : group.rollouts) out.push_back(r.reward);
  return out;
}

}  // namespace

ObjectiveReport grpo_objective(const RolloutGroup& group, const GrpoConfig& config) {
  config.validate();
  check_group(group, config);
  const auto rewards = rewards_of(group);
  const auto adv = group_advantages(rewards, config);
  const double g = static_cast<double>(group.rollouts.size());
  ObjectiveReport rep;
  std::size_t tokens = 0, clipped = 0;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const auto& ro = group.rollouts[i];
    const double len = static_cast<double>(ro.tokens.size());
    double sum = 0.0, kl_sum = 0.0;
    for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
      auto terms = token_terms(ro.logp_new[t], ro.logp_old[t], ro.logp_ref[t], adv.per_rollout[i],
                               config.clip_epsilon);
      sum += terms.surrogate - config.kl_beta * terms.kl;
      kl_sum += terms.kl;
      clipped += terms.clipped ? 1 : 0;
      ++tokens;
    }
    rep.objective += sum / len / g;
    rep.mean_kl += kl_sum / len / g;
  }
  rep.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
  rep.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
  return rep;
}

// --- TabularPolicy ------------------------------------------------------------

TabularPolicy::TabularPolicy(int vocab_size, int start_token, int stop_token, int max_len)
    : vocab_(vocab_size), start_(start_token), stop_(stop_token), max_len_(max_len) {
  if (vocab_ < 2) throw ConfigError("vocab_size must be at least 2");
  if (start_ < 0 || start_ >= vocab_ || stop_ < 0 || stop_ >= vocab_)
    throw ConfigError("start/stop token out of range");
  if (max_len_ < 1) throw ConfigError("max_len must be at least 1");
  logits_.assign(static_cast<std::size_t>(vocab_) * vocab_, 0.0);
}

std::vector<double> TabularPolicy::probabilities(int prev) const {
  std::vector<double> p(vocab_);
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < vocab_; ++j) mx = std::max(mx, logit(prev, j));
  double z = 0.0;
  for (int j = 0; j < vocab_; ++j) z += (p[j] = std::exp(logit(prev, j) - mx));
  for (auto& x : p) x /= z;
  return p;
}

double TabularPolicy::log_prob(int prev, int next) const {
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < vocab_; ++j) mx = std::max(mx, logit(prev, j));
  double z = 0.0;
  for (int j = 0; j < vocab_; ++j) z += std::exp(logit(prev, j) - mx);
  return logit(prev, next) - mx - std::log(z);
}

double TabularPolicy::entropy(int prev) const {
  double h = 0.0;
  for (int j = 0; j < vocab_; ++j) {
    const double lp = log_prob(prev, j);
    h -= std::exp(lp) * lp;
  }
  return h;
}

std::vector<double> TabularPolicy::sampling_probabilities(int prev, std::span<const int> emitted,
                                                          double penalty) const {
  std::vector<double> l(vocab_);
  for (int j = 0; j < vocab_; ++j) l[j] = logit(prev, j);
  if (penalty != 1.0) {
    std::vector<bool> seen(vocab_, false);
    for (int tok : emitted) seen.at(tok) = true;
    for (int j = 0; j < vocab_; ++j)
      if (seen[j]) l[j] = l[j] > 0 ? l[j] / penalty : l[j] * penalty;
  }
  const double mx = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (auto& x : l) z += (x = std::exp(x - mx));
  for (auto& x : l) x /= z;
  return l;
}

Rollout TabularPolicy::sample(std::span<const int> query, Rng& rng, double repetition_penalty) const {
  Rollout out;
  int prev = query.empty() ? start_ : query.back();
  while (static_cast<int>(out.tokens.size()) < max_len_) {
    auto p = sampling_probabilities(prev, out.tokens, repetition_penalty);
    double u = rng.uniform();
    int next = vocab_ - 1;
    for (int j = 0; j < vocab_; ++j) {
      if (u < p[j]) {
        next = j;
        break;
      }
      u -= p[j];
    }
    out.tokens.push_back(next);
    prev = next;
    if (next == stop_) break;
  }
  out.truncated = out.tokens.back() != stop_;
  out.logp_old = sequence_log_probs(query, out.tokens);
  out.logp_new = out.logp_old;
  return out;
}

std::vector<double> TabularPolicy::sequence_log_probs(std::span<const int> query,
                                                      std::span<const int> tokens) const {
  std::vector<double> lp;
  lp.reserve(tokens.size());
  int prev = query.empty() ? start_ : query.back();
  for (int tok : tokens) {
    lp.push_back(log_prob(prev, tok));
    prev = tok;
  }
  return lp;
}

Json TabularPolicy::to_json() const {
  return Json{{"vocab_size", vocab_}, {"start_token", start_}, {"stop_token", stop_},
              {"max_len", max_len_}, {"logits", logits_}};
}

// --- objective gradient ---------------------------------------------------------

ObjectiveGradient objective_and_gradient(const TabularPolicy& policy, std::span<const RolloutGroup> groups,
                                         const GrpoConfig& config) {
  config.validate();
  if (groups.empty()) throw ConfigError("no rollout groups");
  ObjectiveGradient out;
  out.gradient.assign(policy.parameters().size(), 0.0);
  const int v = policy.vocab_size();
  const double q = static_cast<double>(groups.size());
  double clipped_frac_sum = 0.0;

  // Row softmax cache.
  std::vector<std::vector<double>> probs(v);
  for (int p = 0; p < v; ++p) probs[p] = policy.probabilities(p);

  for (const auto& group : groups) {
    RolloutGroup current = group;
    for (auto& r : current.rollouts) r.logp_new = policy.sequence_log_probs(group.query, r.tokens);
    auto rep = grpo_objective(current, config);
    out.report.objective += rep.objective / q;
    out.report.mean_kl += rep.mean_kl / q;
    out.report.mean_reward += rep.mean_reward / q;
    clipped_frac_sum += rep.clip_fraction;

    const auto adv = group_advantages(rewards_of(current), config);
    const double g = static_cast<double>(current.rollouts.size());
    for (std::size_t i = 0; i < current.rollouts.size(); ++i) {
      const auto& ro = current.rollouts[i];
      const double scale = 1.0 / (q * g * static_cast<double>(ro.tokens.size()));
      int prev = group.query.empty() ? policy.start_token() : group.query.back();
      for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
        auto terms = token_terms(ro.logp_new[t], ro.logp_old[t], ro.logp_ref[t], adv.per_rollout[i],
                                 config.clip_epsilon);
        const double coeff = scale * (terms.d_surrogate - config.kl_beta * terms.d_kl);
        const int y = ro.tokens[t];
        if (coeff != 0.0) {
          // d log softmax(prev)[y] / d logit(prev, j) = [j == y] - p_j
          for (int j = 0; j < v; ++j)
            out.gradient[policy.index(prev, j)] += coeff * ((j == y ? 1.0 : 0.0) - probs[prev][j]);
        }
        prev = y;
      }
    }
  }
  out.report.clip_fraction = clipped_frac_sum / q;
  return out;
}

StepReport grpo_step(TabularPolicy& policy, const TabularPolicy& reference,
                     std::span<const std::vector<int>> queries, const RewardFn& reward_fn,
                     const GrpoConfig& config, std::uint64_t seed) {
  config.validate();
  if (queries.empty()) throw ConfigError("grpo_step needs at least one query");
  const TabularPolicy old = policy;
  std::vector<RolloutGroup> groups(queries.size());
  StepReport report;
  double entropy_sum = 0.0, len_sum = 0.0;
  std::size_t token_count = 0, rollout_count = 0;

  // Each query draws from its own stream so sampling order does not matter.
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    Rng rng(stable_hash64(std::to_string(qi), seed));
    auto& group = groups[qi];
    group.query = queries[qi];
    for (std::size_t k = 0; k < config.group_size; ++k) {
      auto ro = old.sample(group.query, rng, config.repetition_penalty);
      ro.logp_ref = reference.sequence_log_probs(group.query, ro.tokens);
      ro.reward = reward_fn(group.query, ro.tokens);
      report.truncated += ro.truncated ? 1 : 0;
      int prev = group.query.empty() ? old.start_token() : group.query.back();
      for (int tok : ro.tokens) {
        entropy_sum += old.entropy(prev);
        prev = tok;
      }
      token_count += ro.tokens.size();
      len_sum += static_cast<double>(ro.tokens.size());
      ++rollout_count;
      group.rollouts.push_back(std::move(ro));
    }
  }
  report.entropy = entropy_sum / static_cast<double>(token_count);
  report.mean_len = len_sum / static_cast<double>(rollout_count);

  for (int epoch = 0; epoch < config.epochs_per_batch; ++epoch) {
    auto og = objective_and_gradient(policy, groups, config);
    if (epoch == 0) report.objective = og.report;
    if (config.learning_rate == 0.0) continue;
    auto& theta = policy.parameters();
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += config.learning_rate * og.gradient[k];
  }
  return report;
}

// --- toy task -------------------------------------------------------------------

std::string ToyVerdictTask::detokenize(std::span<const int> tokens) {
  static const char* kText[kVocab] = {"", "<think>", "</think>", "weigh the statute",
                                      "\\boxed{prohibited}", "\\boxed{permitted}"};
  std::string out;
  for (int t : tokens) {
    if (t == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += kText[t];
  }
  return out;
}

double ToyVerdictTask::reward(std::span<const int> tokens) const {
  // An output cut off at max_len never finished its answer.
  if (tokens.empty() || tokens.back() != kEos) return 0.0;
  return reward::total_reward(detokenize(tokens), gold, {alpha}).total;
}

TabularPolicy ToyVerdictTask::cold_start_policy() const {
  TabularPolicy p(kVocab, kEos, kEos, max_len);
  // Layout: <think> word </think> box <eos>.
  p.set_logit(kEos, kThinkOpen, layout_logit);
  p.set_logit(kThinkOpen, kWord, layout_logit);
  p.set_logit(kWord, kThinkClose, layout_logit);
  p.set_logit(kBoxProhibited, kEos, layout_logit);
  p.set_logit(kBoxPermitted, kEos, layout_logit);
  const int right = gold == Verdict::kProhibited ? kBoxProhibited : kBoxPermitted;
  const int wrong = right == kBoxProhibited ? kBoxPermitted : kBoxProhibited;
  p.set_logit(kThinkClose, wrong, layout_logit);
  p.set_logit(kThinkClose, right, layout_logit - verdict_gap);
  return p;
}

GrpoConfig ToyVerdictTask::demo_config() {
  GrpoConfig c;
  c.learning_rate = 150.0;
  return c;
}

Json StepMetrics::to_json() const {
  return Json{{"step", step},         {"objective", objective}, {"mean_reward", mean_reward},
              {"clip_fraction", clip_fraction}, {"mean_kl", mean_kl}, {"entropy", entropy},
              {"mean_len", mean_len}};
}

std::vector<StepMetrics> run_toy_demo(const ToyVerdictTask& task, const GrpoConfig& config,
                                      const DemoOptions& options,
                                      const std::function<void(const StepMetrics&)>& on_step) {
  config.validate();
  TabularPolicy policy = task.cold_start_policy();
  const TabularPolicy reference = policy;
  const std::vector<std::vector<int>> queries(static_cast<std::size_t>(options.queries_per_step),
                                              std::vector<int>{ToyVerdictTask::kEos});
  auto reward_fn = [&task](std::span<const int>, std::span<const int> tokens) { return task.reward(tokens); };
  std::vector<StepMetrics> metrics;
  for (int step = 1; step <= options.steps; ++step) {
    auto rep = grpo_step(policy, reference, queries, reward_fn, config,
                         stable_hash64("step" + std::to_string(step), options.seed));
    StepMetrics m{step, rep.objective.objective, rep.objective.mean_reward, rep.objective.clip_fraction,
                  rep.objective.mean_kl, rep.entropy, rep.mean_len};
    if (on_step) on_step(m);
    metrics.push_back(m);
  }
  return metrics;
}

}  // namespace forge::grpo
