#pragma once

// Synthetic online-recommendation environment. A user is described by 11
// categorical demographic attributes (one-hot, 88 bits) and a 3-d dynamic
// interest; the agent recommends a page as a 27-d embedding and receives
// the number of clicked items out of 10.

#include <array>
#include <cstdint>
#include <optional>

#include "invrec/numeric.hpp"
#include "invrec/rng.hpp"

namespace invrec::env {

inline constexpr int kAttributes = 11;
inline constexpr int kCategories = 8;
inline constexpr int kStaticDim = kAttributes * kCategories;  // 88
inline constexpr int kInterestDim = 3;
inline constexpr int kObsDim = kStaticDim + kInterestDim;  // 91
inline constexpr int kActionDim = 27;
inline constexpr int kPairDim = kObsDim + kActionDim;  // 118
inline constexpr int kPageSize = 10;

using numeric::Vector;

struct EnvConfig {
  std::uint64_t seed = 7;
  int max_steps = 50;
  double kappa = 6.0;
  double click_bias = 0.3;
  double drift = 0.2;
  double leave_prob = 0.05;
  int boredom_threshold = 2;
  // Share of the static-attribute columns of the user map that comes from one
  // population-wide taste vector; 0 makes every column independent.
  double taste_share = 0.05;

  void validate() const;
};

using StaticAttrs = std::array<int, kAttributes>;

// 11 one-hot blocks of width 8. Throws ValidationError on an attribute outside 0..7.
Vector encode_user(const StaticAttrs& attrs);

struct UserProfile {
  StaticAttrs static_attrs{};
  Vector static_code;  // 88
  Vector interest;     // 3, in [-1, 1]
 private:
  friend class Environment;
  friend struct Diagnostics;
  Vector hidden_pref_;  // 27, unit norm; never part of an observation
};

struct EnvState {
  UserProfile profile;
  int step_index = 0;
  int consecutive_zero_rewards = 0;
  bool done = false;
  Rng rng;
};

struct StepInfo {
  double click_prob = 0.0;
  int step_index = 0;
};

struct StepResult {
  Vector observation;  // 91
  int reward = 0;      // clicks in 0..10
  bool done = false;
  StepInfo info;
};

// Holds the fixed random matrices; immutable after construction and safe
// to share across threads. Episode state lives in EnvState.
class Environment {
 public:
  explicit Environment(const EnvConfig& config);

  const EnvConfig& config() const { return config_; }

  // Fresh user for the episode identified by `seed`.
  EnvState reset(std::uint64_t seed) const;
  Vector observe(const EnvState& state) const;

  // Throws StateError if the episode is already over.
  StepResult step(EnvState& state, const Vector& action) const;

  // p = sigmoid(kappa * (<a/|a|, pref> - click_bias)).
  double click_probability(const Vector& hidden_pref, const Vector& action) const;

 private:
  Vector preference(const Vector& static_code, const Vector& interest) const;

  EnvConfig config_;
  numeric::Matrix user_map_;    // 27 x 91
  numeric::Matrix projection_;  // 3 x 27
};

std::pair<EnvState, Vector> env_reset(const Environment& env, std::uint64_t seed);
StepResult env_step(const Environment& env, EnvState& state, const Vector& action);

// Test and calibration access to the latent preference. Learners never see
// this; it exists to build the oracle baseline.
struct Diagnostics {
  static const Vector& hidden_pref(const EnvState& state);
  // Throws StateError on a finished episode.
  static Vector oracle_action(const EnvState& state);
};

}  // namespace invrec::env
