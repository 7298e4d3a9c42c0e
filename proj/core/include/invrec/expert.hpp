#pragma once

// Expert acquisition: DDPG with Ornstein-Uhlenbeck exploration and a FIFO
// replay buffer, trained directly on the environment reward. The trained
// deterministic actor generates the demonstrations for imitation.

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "invrec/envsim.hpp"
#include "invrec/numeric.hpp"

namespace invrec::expert {

using numeric::Matrix;
using numeric::MLPParams;
using numeric::Vector;

struct OUState {
  Vector x;
  double theta = 0.15;
  double mu = 0.0;
  double sigma = 0.2;
  double scale = 0.1;
};

OUState make_ou(Eigen::Index dim, double theta = 0.15, double mu = 0.0, double sigma = 0.2,
                double scale = 0.1);

// x <- x + theta (mu - x) + sigma z; returns scale * x.
Vector ou_next(OUState& state, Rng& rng);

struct Transition {
  Vector obs;
  Vector action;
  double reward = 0.0;  // raw clicks, 0..10
  Vector next_obs;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  // Evicts the oldest transition once full.
  void push(Transition t);
  // Uniform without replacement. Throws ValidationError when n > size().
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

// target <- (1 - tau) target + tau online.
void soft_update(MLPParams& target, const MLPParams& online, double tau);

struct DDPGConfig {
  double gamma = 0.95;
  double tau = 0.001;
  Eigen::Index hidden = 128;
  std::size_t buffer_size = 1000;
  int episodes = 20000;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  int batch_size = 64;
  double ou_theta = 0.15;
  double ou_mu = 0.0;
  double ou_sigma = 0.2;
  double ou_scale = 0.1;
  // The noise-free actor is evaluated every `eval_every` episodes and the best
  // evaluation is kept. Plateau stop: once past `min_episodes`, training ends
  // when the best evaluation CTR improved by less than `plateau_tol`
  // (relative) over the last `plateau_window` episodes.
  int eval_every = 100;
  int eval_episodes = 50;
  int plateau_window = 500;
  double plateau_tol = 0.01;
  int min_episodes = 1000;
  // Final actor/critic layers start in U(-final_init, final_init); 0 keeps
  // the default scaled-uniform init.
  double final_init = 3e-3;
  // L2 weight on the actor's pre-tanh activations. Click probability depends
  // only on the action direction, so the critic gives no signal on scale;
  // without this term the actor drifts into tanh saturation where its
  // gradient vanishes.
  double preact_penalty = 0.1;
  // L2 weight decay on the critic weights (biases excluded).
  double critic_weight_decay = 1e-2;

  void validate() const;
};

struct DDPGNets {
  MLPParams actor;          // obs -> hidden -> hidden -> action, tanh head
  MLPParams critic;         // (obs ++ action) -> hidden -> hidden -> 1
  MLPParams actor_target;
  MLPParams critic_target;
  numeric::AdamState actor_adam;
  numeric::AdamState critic_adam;
};

DDPGNets make_ddpg(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden, Rng& rng,
                   double final_init = 0.0);

struct DDPGStats {
  double q_loss = 0.0;           // critic MSE before its step
  double actor_objective = 0.0;  // mean Q(s, actor(s)) before the actor step
};

// Critic regresses onto clicks/10 + gamma (1 - done) Q'(s', actor'(s')); the
// actor ascends mean Q(s, actor(s)) - preact_penalty * mean ||pre-tanh||^2;
// both targets are then soft-updated.
DDPGStats ddpg_update(DDPGNets& nets, const std::vector<Transition>& batch, double gamma, double tau,
                      double lr_actor, double lr_critic, double preact_penalty = 0.0,
                      double critic_weight_decay = 0.0);

// Mean critic loss for a batch; exposed for gradient checks.
double ddpg_critic_loss(const DDPGNets& nets, const std::vector<Transition>& batch, double gamma,
                        numeric::MLPGrads* grad = nullptr);

struct ExpertCurvePoint {
  int episode = 0;
  int steps = 0;
  double env_reward = 0.0;  // clicks summed over the episode
  double ctr = 0.0;
};

struct ExpertEvalPoint {
  int episode = 0;
  double ctr = 0.0;
};

struct ExpertTrainingResult {
  DDPGNets nets;  // best evaluated snapshot
  std::vector<ExpertCurvePoint> curve;
  std::vector<ExpertEvalPoint> evaluations;
  int episodes_run = 0;
  double best_eval_ctr = 0.0;
};

using ExpertProgress = std::function<void(const ExpertEvalPoint&)>;

ExpertTrainingResult train_expert(const env::EnvConfig& env_config, const DDPGConfig& config,
                                  int episodes, std::uint64_t seed, const ExpertProgress& progress = {});

// Mean CTR of the noise-free actor over `episodes` episodes.
double evaluate_actor_ctr(const MLPParams& actor, const env::Environment& env, int episodes,
                          std::uint64_t seed);

struct ExpertDataset {
  Matrix states;   // N x 91
  Matrix actions;  // N x 27
  std::uint64_t seed = 0;
  int episodes = 0;
  double mean_env_reward = 0.0;  // clicks per step
  double mean_ctr = 0.0;         // mean per-episode CTR

  Eigen::Index size() const { return states.rows(); }
};

ExpertDataset collect_expert(const MLPParams& actor, const env::EnvConfig& env_config,
                             std::size_t n_pairs, std::uint64_t seed);

}  // namespace invrec::expert
