#pragma once

// Advantage actor-critic networks for the learner. The actor is a diagonal
// Gaussian whose mean is a tanh-headed MLP and whose log standard deviation
// is a free, state-independent vector.

#include <span>
#include <vector>

#include "invrec/envsim.hpp"
#include "invrec/numeric.hpp"

namespace invrec::policy {

using numeric::Matrix;
using numeric::MLPParams;
using numeric::Vector;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogStdInit = -0.5;

struct ActorParams {
  MLPParams mlp;   // obs -> hidden -> hidden -> action, tanh head
  Vector log_std;  // action_dim

  Eigen::Index action_dim() const { return log_std.size(); }

  // mlp tensors followed by log_std.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  ActorParams zeros_like() const;
  void clamp_log_std();
};

enum class CriticInput { State, StateAction };

struct CriticParams {
  MLPParams mlp;  // identity head, one output
  CriticInput input_mode = CriticInput::State;

  std::vector<std::span<double>> tensors() { return mlp.tensors(); }
  std::vector<std::span<const double>> tensors() const { return mlp.tensors(); }
};

ActorParams make_actor(Eigen::Index obs_dim, Eigen::Index hidden, Eigen::Index action_dim, Rng& rng);
CriticParams make_critic(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden,
                         CriticInput mode, Rng& rng);

enum class ActMode { Stochastic, Deterministic };

struct Action {
  Vector action;
  double log_prob = 0.0;
};

Action act(const ActorParams& actor, const Vector& obs, ActMode mode, Rng& rng);

// Gaussian mean mu(s).
Vector mean_action(const ActorParams& actor, const Vector& obs);

double log_prob(const ActorParams& actor, const Vector& obs, const Vector& action);

// Diagonal Gaussian log density of each row of `actions` under the matching
// row of `means`.
Vector gaussian_log_prob(const Matrix& means, const Vector& log_std, const Matrix& actions);

// sum(log_std) + d/2 * (1 + ln 2 pi). Independent of the state.
double entropy(const ActorParams& actor);

// `action` must be supplied exactly when the critic is in StateAction mode.
double value(const CriticParams& critic, const Vector& obs, const Vector* action = nullptr);

// Batched critic input: obs rows, with action rows appended in StateAction mode.
Matrix critic_input(const CriticParams& critic, const Matrix& obs, const Matrix* actions);

}  // namespace invrec::policy
