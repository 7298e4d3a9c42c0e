#pragma once

// Learned reward surrogate. D(s, a) is the probability that a state-action
// pair came from the expert; the learner is paid ln D(s, a).

#include "invrec/numeric.hpp"

namespace invrec::disc {

using numeric::Matrix;
using numeric::MLPParams;
using numeric::Vector;

struct DiscParams {
  MLPParams mlp;  // (obs ++ action) -> hidden -> hidden -> 1, sigmoid head
  double clip_eps = 1e-8;
};

DiscParams make_discriminator(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden,
                              Rng& rng);

// A set of state-action pairs, one per row.
struct Pairs {
  Matrix obs;
  Matrix actions;

  Eigen::Index size() const { return obs.rows(); }
  Matrix joined() const;
};

double disc_score(const DiscParams& disc, const Vector& obs, const Vector& action);
Vector disc_scores(const DiscParams& disc, const Pairs& pairs);

// -(mean_expert ln D + mean_learner ln(1 - D)).
double disc_loss(const DiscParams& disc, const Pairs& learner, const Pairs& expert);

struct LossAndGrad {
  double loss = 0.0;
  numeric::MLPGrads grads;
};

LossAndGrad disc_loss_and_grad(const DiscParams& disc, const Pairs& learner, const Pairs& expert);

struct UpdateResult {
  double loss_before = 0.0;
};

// One Adam step on disc_loss.
UpdateResult disc_update(DiscParams& disc, numeric::AdamState& adam, const Pairs& learner,
                         const Pairs& expert, double lr);

double bonus_reward(const DiscParams& disc, const Vector& obs, const Vector& action);
Vector bonus_rewards(const DiscParams& disc, const Pairs& pairs);

// Fraction of pairs classified correctly (D > 0.5 on expert, < 0.5 on learner).
double accuracy(const DiscParams& disc, const Pairs& learner, const Pairs& expert);

}  // namespace invrec::disc
