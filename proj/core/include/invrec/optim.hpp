#pragma once

// Generalized advantage estimation and proximal policy optimization for the
// Gaussian actor, in both the clipped-surrogate and adaptive-KL-penalty forms.

#include <string>
#include <vector>

#include "invrec/numeric.hpp"
#include "invrec/policy.hpp"

namespace invrec::optim {

using numeric::Matrix;
using numeric::Vector;

enum class Variant { Clip, AdaptiveKl };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct PPOConfig {
  double gamma = 0.995;
  double gae_lambda = 0.97;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch_size = 5;
  double lr = 0.003;
  double entropy_coef = 1e-3;
  double value_coef = 0.5;
  double bonus_weight = 1.0;
  Variant variant = Variant::Clip;
  double beta_init = 1.0;
  double kl_a = 1.5;
  double kl_b = 2.0;
  double kl_target = 0.01;

  void validate() const;
};

// One row per environment step, episodes stored back to back.
struct RolloutBatch {
  Matrix obs;             // N x obs_dim
  Matrix actions;         // N x action_dim
  Vector log_prob_old;    // N
  Vector env_reward;      // N, clicks / 10
  Vector bonus_reward;    // N, ln D(s, a)
  Vector values;          // N, critic at rollout time
  std::vector<bool> dones;
  std::vector<std::size_t> episode_starts;

  std::size_t size() const { return dones.size(); }
  // Throws ShapeError when per-step fields disagree in length.
  void validate() const;
  // env_reward + bonus_weight * bonus_reward.
  Vector combined_rewards(double bonus_weight) const;
};

struct GaeResult {
  Vector advantages;
  Vector returns;
};

// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t); A_t accumulates
// (gamma lambda)^l delta_{t+l} up to the end of the episode. The value after
// the last row is `bootstrap_value` (ignored when that row is terminal).
GaeResult compute_gae(const Vector& rewards, const Vector& values, double bootstrap_value,
                      const std::vector<bool>& dones, double gamma, double gae_lambda);

// Zero mean, unit standard deviation (std floored at 1e-8). Single-element
// inputs are centred only.
Vector normalize_advantages(const Vector& advantages);

// mean(min(r A, clip(r, 1 - eps, 1 + eps) A)).
double ppo_clip_objective(const Vector& ratios, const Vector& advantages, double clip_eps);

// mean(r A) - beta * kl.
double adaptive_kl_objective(const Vector& ratios, const Vector& advantages, double kl, double beta);

// beta / b when d < d_target * a, else beta * b.
double update_beta(double beta, double d, double d_target, double a, double b);

// KL(N(mu_old, sigma_old) || N(mu, sigma)) per row, diagonal Gaussians.
Vector gaussian_kl(const Matrix& means_old, const Vector& log_std_old, const Matrix& means,
                   const Vector& log_std);

struct Minibatch {
  Matrix obs;
  Matrix actions;
  Vector log_prob_old;
  Vector advantages;
  Vector returns;
  Matrix means_old;  // policy mean at the theta_old snapshot
  Vector log_std_old;
};

struct MinibatchLoss {
  double total = 0.0;
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;             // mean analytic KL(old || new)
  double clip_fraction = 0.0;  // share of |r - 1| > eps
  double max_ratio_deviation = 0.0;
  policy::ActorParams actor_grad;
  numeric::MLPGrads critic_grad;
};

// Total loss -objective + value_coef * MSE - entropy_coef * H, where the
// objective is the clipped surrogate or the KL-penalized one (with `beta`).
// Gradients are exact batch means.
MinibatchLoss ppo_minibatch_loss(const policy::ActorParams& actor, const policy::CriticParams& critic,
                                 const Minibatch& mb, const PPOConfig& config, double beta,
                                 bool with_grads = true);

struct PPOState {
  numeric::AdamState actor_adam;
  numeric::AdamState critic_adam;
  double beta = 1.0;
};

PPOState make_ppo_state(const PPOConfig& config);

struct PPOStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;  // analytic, used by the beta rule
  double beta = 0.0;     // after the update
  // First minibatch of the first epoch, before any step.
  double first_max_ratio_deviation = 0.0;
  double first_clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

// K epochs of shuffled minibatch Adam steps on actor and critic. Advantages
// are computed with compute_gae on the combined reward and normalized.
PPOStats ppo_update(policy::ActorParams& actor, policy::CriticParams& critic, PPOState& state,
                    const RolloutBatch& batch, const PPOConfig& config, Rng& rng);

}  // namespace invrec::optim
