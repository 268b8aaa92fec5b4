#pragma once

// Group Relative Policy Optimization at desk scale.
//
// For a query q with G sampled outputs o_1..o_G the maximized objective is
//
//   J = 1/G sum_i 1/|o_i| sum_t [ min(r_it A_i, clip(r_it, 1-eps, 1+eps) A_i) - beta k_it ]
//
// with r_it = pi_theta / pi_old for token t of output i, A_i the group
// normalized reward, and k_it = exp(d) - d - 1, d = logp_ref - logp_theta.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "forge/common.hpp"

namespace forge::grpo {

struct GrpoConfig {
  std::size_t group_size = 5;
  double clip_epsilon = 0.2;
  double kl_beta = 0.001;
  double learning_rate = 1.0;
  double repetition_penalty = 1.2;
  double std_floor = 1e-8;
  // Gradient steps taken on each sampled batch. 1 keeps pi_old == pi_theta at
  // the start of every step.
  int epochs_per_batch = 1;

  void validate() const;
  Json to_json() const;
};

struct Rollout {
  std::vector<int> tokens;
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  double reward = 0.0;
  bool truncated = false;
};

struct RolloutGroup {
  std::vector<int> query;
  std::vector<Rollout> rollouts;
};

struct AdvantageVector {
  std::vector<double> per_rollout;
};

struct ObjectiveReport {
  double objective = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  double mean_reward = 0.0;
};

AdvantageVector group_advantages(std::span<const double> rewards, const GrpoConfig& config);

double token_ratio(double logp_new, double logp_old);
double clipped_surrogate(double ratio, double advantage, double epsilon);
double kl_penalty(double logp_new, double logp_ref);

ObjectiveReport grpo_objective(const RolloutGroup& group, const GrpoConfig& config);

// --- tabular autoregressive policy ------------------------------------------

// Deterministic uniform source shared by samplers (mt19937_64 bits mapped to
// [0, 1) without relying on implementation-defined distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

class TabularPolicy {
 public:
  TabularPolicy(int vocab_size, int start_token, int stop_token, int max_len);

  int vocab_size() const noexcept { return vocab_; }
  int start_token() const noexcept { return start_; }
  int stop_token() const noexcept { return stop_; }
  int max_len() const noexcept { return max_len_; }

  double logit(int prev, int next) const { return logits_.at(index(prev, next)); }
  void set_logit(int prev, int next, double v) { logits_.at(index(prev, next)) = v; }
  std::vector<double>& parameters() noexcept { return logits_; }
  const std::vector<double>& parameters() const noexcept { return logits_; }
  std::size_t index(int prev, int next) const { return static_cast<std::size_t>(prev) * vocab_ + next; }

  // log pi(next | prev) without any sampling penalty.
  double log_prob(int prev, int next) const;
  std::vector<double> probabilities(int prev) const;
  double entropy(int prev) const;

  // Sampling distribution: logits of tokens already emitted in this output are
  // divided by the penalty when positive and multiplied by it otherwise.
  std::vector<double> sampling_probabilities(int prev, std::span<const int> emitted, double penalty) const;

  // Samples until stop_token or max_len tokens. The first token is conditioned
  // on the last query token (start_token for an empty query).
  Rollout sample(std::span<const int> query, Rng& rng, double repetition_penalty) const;

  // Per-token log-probabilities of an output under this policy.
  std::vector<double> sequence_log_probs(std::span<const int> query, std::span<const int> tokens) const;

  Json to_json() const;

 private:
  int vocab_, start_, stop_, max_len_;
  std::vector<double> logits_;
};

struct ObjectiveGradient {
  ObjectiveReport report;
  std::vector<double> gradient;  // dJ/dtheta, same layout as parameters()
};

// Batch objective (mean of per-group objectives) evaluated at `policy`, with
// logp_old / logp_ref / rewards taken from the groups, plus its exact gradient.
ObjectiveGradient objective_and_gradient(const TabularPolicy& policy, std::span<const RolloutGroup> groups,
                                         const GrpoConfig& config);

using RewardFn = std::function<double(std::span<const int> query, std::span<const int> tokens)>;

struct StepReport {
  ObjectiveReport objective;
  double entropy = 0.0;
  double mean_len = 0.0;
  std::size_t truncated = 0;
};

// One sampling round plus epochs_per_batch gradient-ascent updates.
StepReport grpo_step(TabularPolicy& policy, const TabularPolicy& reference,
                     std::span<const std::vector<int>> queries, const RewardFn& reward_fn,
                     const GrpoConfig& config, std::uint64_t seed);

// --- toy verdict task ---------------------------------------------------------

// Six-token vocabulary whose outputs detokenize into miniature responses that
// the verdict reward can score. Token 0 doubles as start and stop.
struct ToyVerdictTask {
  static constexpr int kEos = 0;
  static constexpr int kThinkOpen = 1;
  static constexpr int kThinkClose = 2;
  static constexpr int kWord = 3;
  static constexpr int kBoxProhibited = 4;
  static constexpr int kBoxPermitted = 5;
  static constexpr int kVocab = 6;

  Verdict gold = Verdict::kProhibited;
  double alpha = 1.0 / 9.0;
  int max_len = 8;

  static std::string detokenize(std::span<const int> tokens);
  double reward(std::span<const int> tokens) const;
  // Stand-in for a cold-started model: the response layout is already
  // learned but the verdict leans toward the wrong label, so the initial
  // mean reward sits near alpha.
  double layout_logit = 15.0;
  double verdict_gap = 4.5;
  TabularPolicy cold_start_policy() const;
  // Settings used by the demo: one query (one group) per step and a step
  // size large enough that a single informative group settles a decision.
  static GrpoConfig demo_config();
};

struct StepMetrics {
  int step = 0;
  double objective = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  double entropy = 0.0;
  double mean_len = 0.0;

  Json to_json() const;
};

struct DemoOptions {
  int steps = 500;
  int queries_per_step = 1;
  std::uint64_t seed = 7;
};

std::vector<StepMetrics> run_toy_demo(const ToyVerdictTask& task, const GrpoConfig& config,
                                      const DemoOptions& options,
                                      const std::function<void(const StepMetrics&)>& on_step = {});

}  // namespace forge::grpo
