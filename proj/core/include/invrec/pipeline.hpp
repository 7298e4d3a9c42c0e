#pragma once

// Adversarial imitation training loop: roll out the learner, update the
// discriminator against expert pairs, then run PPO on the combined
// environment + ln D reward. Also evaluation, CTR, the occupancy divergence
// diagnostic and the (lambda_g x eps) grid harness.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "invrec/discriminator.hpp"
#include "invrec/envsim.hpp"
#include "invrec/expert.hpp"
#include "invrec/optim.hpp"
#include "invrec/policy.hpp"

namespace invrec::pipeline {

using numeric::Matrix;
using numeric::Vector;

struct RunConfig {
  int iterations = 200;
  int episodes_per_iteration = 100;
  double disc_lr = 0.003;
  int disc_updates_per_iteration = 1;
  int eval_episodes = 20;
  int checkpoint_every = 50;
  Eigen::Index hidden = 256;
  Eigen::Index disc_hidden = 128;
  policy::CriticInput critic_input = policy::CriticInput::State;
  std::string expert_path;
  std::size_t expert_pairs = 20000;
  std::uint64_t seed = 1;
  std::string out_dir;
  int js_bins = 16;
  std::uint64_t js_projection_seed = 2024;

  void validate() const;
};

// Everything a run needs, as parsed from a config file.
struct Settings {
  env::EnvConfig env;
  optim::PPOConfig ppo;
  expert::DDPGConfig ddpg;
  RunConfig run;

  void validate() const;
};

struct IterationStats {
  int iteration = 0;
  int episodes = 0;
  long steps = 0;
  double mean_env_reward = 0.0;  // clicks per step
  double mean_bonus = 0.0;
  double ctr = 0.0;
  double disc_loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
};

// r_episode / (10 * n_steps). Throws ValidationError when n_steps == 0 or a
// reward lies outside 0..10.
double ctr(std::span<const int> episode_rewards, long n_steps);

struct Learner {
  policy::ActorParams actor;
  policy::CriticParams critic;
  disc::DiscParams disc;
};

Learner make_learner(const RunConfig& run, Rng& rng);

struct RolloutResult {
  optim::RolloutBatch batch;
  std::vector<int> episode_clicks;
  std::vector<int> episode_steps;

  double mean_ctr() const;
  disc::Pairs pairs() const;
};

// Full stochastic episodes under the actor. Episode e of the call uses the
// stream derive_seed(seed, {e}).
RolloutResult rollout(const env::Environment& env, const Learner& learner, int n_episodes,
                      std::uint64_t seed);

struct EvalResult {
  double mean_ctr = 0.0;
  double ctr_half_width = 0.0;  // 1.96 sigma / sqrt(n)
  double mean_episode_reward = 0.0;
  std::vector<double> episode_ctr;
  std::vector<int> episode_reward;
};

EvalResult evaluate(const policy::ActorParams& actor, const env::EnvConfig& env_config, int n_episodes,
                    std::uint64_t seed, bool deterministic);

// Same protocol for an arbitrary action rule (expert, random, oracle baselines).
using ActionRule = std::function<Vector(const env::EnvState&, const Vector& obs, Rng&)>;
EvalResult evaluate_rule(const ActionRule& rule, const env::EnvConfig& env_config, int n_episodes,
                         std::uint64_t seed);

ActionRule random_rule();

// sum_i P_i ln(P_i / M_i) + sum_i Q_i ln(Q_i / M_i), M = (P + Q) / 2, zero
// terms skipped. Inputs are normalized histograms of equal length.
double js_from_histograms(std::span<const double> p, std::span<const double> q);

// Projects each pair to 2-D with a seeded Gaussian map, histograms both sets
// on a shared bins x bins grid over the joint range, and returns the
// divergence above.
double occupancy_js(const disc::Pairs& learner, const disc::Pairs& expert, int bins,
                    std::uint64_t projection_seed);

struct RunResult {
  std::vector<IterationStats> stats;
  std::vector<double> occupancy_js;  // per iteration
  std::vector<std::string> events;
  Learner learner;
  double final_beta = 0.0;
};

struct RunHooks {
  std::function<void(const IterationStats&)> on_iteration;
};

// Trains from `expert_data`; writes metrics.csv, events.log, js.csv and
// checkpoint.irlr into run.out_dir when it is non-empty.
RunResult train_invrec(const Settings& settings, const expert::ExpertDataset& expert_data,
                       const RunHooks& hooks = {});

// Loads the expert dataset from settings.run.expert_path first.
RunResult train_invrec(const Settings& settings, const RunHooks& hooks = {});

struct GridRow {
  double gae_lambda = 0.0;
  double clip_eps = 0.0;
  double ctr = 0.0;
  double half_width = 0.0;
};

// One training run per (lambda_g, eps) cell, each evaluated with
// run.eval_episodes deterministic episodes. Row-major over lambda_g.
std::vector<GridRow> run_grid(const Settings& base, const expert::ExpertDataset& expert_data,
                              std::span<const double> gae_lambdas, std::span<const double> clip_eps);

// Header and rows as CSV text.
std::string format_grid(std::span<const GridRow> rows);

}  // namespace invrec::pipeline
