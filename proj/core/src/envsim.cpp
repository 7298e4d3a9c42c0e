#include "invrec/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "invrec/errors.hpp"

namespace invrec::env {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector unit(const Vector& v) { return v / std::max(v.norm(), 1e-12); }

}  // namespace

void EnvConfig::validate() const {
  if (max_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (!(kappa > 0.0)) throw ConfigError("env.kappa must be > 0");
  if (!std::isfinite(click_bias)) throw ConfigError("env.click_bias must be finite");
  if (!(drift >= 0.0 && drift <= 1.0)) throw ConfigError("env.drift must be in [0, 1]");
  if (!(leave_prob >= 0.0 && leave_prob < 1.0)) throw ConfigError("env.leave_prob must be in [0, 1)");
  if (boredom_threshold < 1) throw ConfigError("boredom threshold must be >= 1");
  if (!(taste_share >= 0.0 && taste_share <= 1.0)) throw ConfigError("env.taste_share must be in [0, 1]");
}

Vector encode_user(const StaticAttrs& attrs) {
  Vector code = Vector::Zero(kStaticDim);
  for (int i = 0; i < kAttributes; ++i) {
    const int a = attrs[static_cast<std::size_t>(i)];
    if (a < 0 || a >= kCategories)
      throw ValidationError("static attribute " + std::to_string(i) + " = " + std::to_string(a) +
                            " outside 0..7");
    code[i * kCategories + a] = 1.0;
  }
  return code;
}

Environment::Environment(const EnvConfig& config) : config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, {0xe17});
  std::normal_distribution<double> normal(0.0, 1.0);
  user_map_.resize(kActionDim, kObsDim);
  for (Eigen::Index i = 0; i < user_map_.size(); ++i) user_map_.data()[i] = normal(rng);
  projection_.resize(kInterestDim, kActionDim);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = normal(rng);
  Vector taste(kActionDim);
  for (Eigen::Index i = 0; i < kActionDim; ++i) taste[i] = normal(rng);
  const double own = std::sqrt(1.0 - config_.taste_share);
  const double shared = std::sqrt(config_.taste_share);
  for (Eigen::Index j = 0; j < kStaticDim; ++j) user_map_.col(j) = own * user_map_.col(j) + shared * taste;
}

Vector Environment::preference(const Vector& static_code, const Vector& interest) const {
  Vector x(kObsDim);
  x << static_code, interest;
  return unit(user_map_ * x);
}

EnvState Environment::reset(std::uint64_t seed) const {
  EnvState s;
  s.rng = make_rng(seed, {0x5e7});
  std::uniform_int_distribution<int> category(0, kCategories - 1);
  for (auto& a : s.profile.static_attrs) a = category(s.rng);
  s.profile.static_code = encode_user(s.profile.static_attrs);
  std::uniform_real_distribution<double> unit_box(-1.0, 1.0);
  s.profile.interest.resize(kInterestDim);
  for (int i = 0; i < kInterestDim; ++i) s.profile.interest[i] = unit_box(s.rng);
  s.profile.hidden_pref_ = preference(s.profile.static_code, s.profile.interest);
  return s;
}

Vector Environment::observe(const EnvState& state) const {
  Vector obs(kObsDim);
  obs << state.profile.static_code, state.profile.interest;
  return obs;
}

double Environment::click_probability(const Vector& hidden_pref, const Vector& action) const {
  const Vector direction = unit(action.cwiseMax(-1.0).cwiseMin(1.0));
  return sigmoid(config_.kappa * (direction.dot(hidden_pref) - config_.click_bias));
}

StepResult Environment::step(EnvState& state, const Vector& action) const {
  if (state.done) throw StateError("env_step called on a finished episode");
  if (action.size() != kActionDim) throw ShapeError("action must have 27 entries");
  if (!action.allFinite()) throw ValidationError("action contains non-finite values");

  const Vector direction = unit(action.cwiseMax(-1.0).cwiseMin(1.0));
  const double p = sigmoid(config_.kappa * (direction.dot(state.profile.hidden_pref_) - config_.click_bias));
  std::binomial_distribution<int> clicks(kPageSize, p);
  const int reward = clicks(state.rng);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool leaves = u01(state.rng) < config_.leave_prob;

  state.consecutive_zero_rewards = reward == 0 ? state.consecutive_zero_rewards + 1 : 0;

  // Interest drifts toward the projection of what was shown; the latent
  // preference follows the interest.
  auto& interest = state.profile.interest;
  interest = (interest + config_.drift * (projection_ * direction - interest)).cwiseMax(-1.0).cwiseMin(1.0);
  state.profile.hidden_pref_ = preference(state.profile.static_code, interest);

  StepResult r;
  r.info = {p, state.step_index};
  state.step_index += 1;
  state.done = state.step_index >= config_.max_steps ||
               state.consecutive_zero_rewards >= config_.boredom_threshold || leaves;
  r.observation = observe(state);
  r.reward = reward;
  r.done = state.done;
  return r;
}

std::pair<EnvState, Vector> env_reset(const Environment& env, std::uint64_t seed) {
  EnvState s = env.reset(seed);
  Vector obs = env.observe(s);
  return {std::move(s), std::move(obs)};
}

StepResult env_step(const Environment& env, EnvState& state, const Vector& action) {
  return env.step(state, action);
}

const Vector& Diagnostics::hidden_pref(const EnvState& state) { return state.profile.hidden_pref_; }

Vector Diagnostics::oracle_action(const EnvState& state) {
  if (state.done) throw StateError("oracle_action called on a finished episode");
  return state.profile.hidden_pref_;
}

}  // namespace invrec::env
