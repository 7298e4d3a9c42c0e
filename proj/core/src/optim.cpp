#include "invrec/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "invrec/errors.hpp"

namespace invrec::optim {

std::string to_string(Variant v) { return v == Variant::Clip ? "clip" : "adaptive_kl"; }

Variant variant_from_string(const std::string& s) {
  if (s == "clip") return Variant::Clip;
  if (s == "adaptive_kl") return Variant::AdaptiveKl;
  throw ConfigError("unknown ppo variant '" + s + "' (expected clip or adaptive_kl)");
}

void PPOConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ppo.gamma must be in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda < 1.0)) throw ConfigError("ppo.gae_lambda must be in [0, 1)");
  if (!(clip_eps > 0.0 && clip_eps <= 0.5)) throw ConfigError("ppo.clip_eps must be in (0, 0.5]");
  if (epochs < 1) throw ConfigError("ppo.epochs must be >= 1");
  if (minibatch_size < 1) throw ConfigError("ppo.minibatch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("ppo.lr must be >= 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef must be >= 0");
  if (!(value_coef >= 0.0)) throw ConfigError("ppo.value_coef must be >= 0");
  if (!std::isfinite(bonus_weight)) throw ConfigError("ppo.bonus_weight must be finite");
  if (!(beta_init >= 0.0)) throw ConfigError("ppo.beta must be >= 0");
  if (!(kl_a > 0.0 && kl_b > 0.0 && kl_target > 0.0))
    throw ConfigError("ppo.kl_a, ppo.kl_b and ppo.kl_target must be > 0");
}

void RolloutBatch::validate() const {
  const auto n = static_cast<Eigen::Index>(dones.size());
  if (obs.rows() != n || actions.rows() != n || log_prob_old.size() != n || env_reward.size() != n ||
      bonus_reward.size() != n || values.size() != n)
    throw ShapeError("rollout batch fields differ in length");
  if (!log_prob_old.allFinite() || !values.allFinite())
    throw ValidationError("rollout batch has non-finite log-probs or values");
}

Vector RolloutBatch::combined_rewards(double bonus_weight) const {
  return env_reward + bonus_weight * bonus_reward;
}

GaeResult compute_gae(const Vector& rewards, const Vector& values, double bootstrap_value,
                      const std::vector<bool>& dones, double gamma, double gae_lambda) {
  const auto n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw ShapeError("compute_gae: rewards, values and dones differ in length");
  GaeResult r;
  r.advantages.resize(n);
  double running = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    const double nonterminal = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double next_value = t + 1 < n ? values[t + 1] : bootstrap_value;
    const double delta = rewards[t] + gamma * next_value * nonterminal - values[t];
    running = delta + gamma * gae_lambda * nonterminal * running;
    r.advantages[t] = running;
  }
  r.returns = r.advantages + values;
  return r;
}

Vector normalize_advantages(const Vector& advantages) {
  const auto n = advantages.size();
  if (n == 0) return advantages;
  const double mean = advantages.mean();
  Vector centred = advantages.array() - mean;
  if (n == 1) return centred;
  const double std = std::sqrt(centred.squaredNorm() / static_cast<double>(n));
  return centred / std::max(std, 1e-8);
}

double ppo_clip_objective(const Vector& ratios, const Vector& advantages, double clip_eps) {
  if (ratios.size() != advantages.size()) throw ShapeError("ppo_clip_objective: length mismatch");
  if (ratios.size() == 0) throw ValidationError("ppo_clip_objective: empty input");
  if ((ratios.array() <= 0.0).any()) throw ValidationError("ppo_clip_objective: ratios must be positive");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    const double a = advantages[i];
    const double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
    sum += std::min(r * a, clipped * a);
  }
  return sum / static_cast<double>(ratios.size());
}

double adaptive_kl_objective(const Vector& ratios, const Vector& advantages, double kl, double beta) {
  if (ratios.size() != advantages.size()) throw ShapeError("adaptive_kl_objective: length mismatch");
  if (ratios.size() == 0) throw ValidationError("adaptive_kl_objective: empty input");
  if ((ratios.array() <= 0.0).any()) throw ValidationError("adaptive_kl_objective: ratios must be positive");
  if (beta < 0.0) throw ValidationError("adaptive_kl_objective: beta must be >= 0");
  return ratios.cwiseProduct(advantages).mean() - beta * kl;
}

double update_beta(double beta, double d, double d_target, double a, double b) {
  return d < d_target * a ? beta / b : beta * b;
}

Vector gaussian_kl(const Matrix& means_old, const Vector& log_std_old, const Matrix& means,
                   const Vector& log_std) {
  if (means_old.rows() != means.rows() || means_old.cols() != means.cols() ||
      log_std_old.size() != log_std.size() || means.cols() != log_std.size())
    throw ShapeError("gaussian_kl: shape mismatch");
  const Eigen::ArrayXd var_old = (2.0 * log_std_old.array()).exp();
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
  const double log_ratio = (log_std - log_std_old).sum();
  const double d = static_cast<double>(log_std.size());
  Vector out(means.rows());
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    const Eigen::ArrayXd diff = (means_old.row(i) - means.row(i)).transpose().array();
    out[i] = log_ratio + 0.5 * ((var_old + diff.square()) * inv_var).sum() - 0.5 * d;
  }
  return out;
}

MinibatchLoss ppo_minibatch_loss(const policy::ActorParams& actor, const policy::CriticParams& critic,
                                 const Minibatch& mb, const PPOConfig& config, double beta,
                                 bool with_grads) {
  const auto n = mb.obs.rows();
  if (n == 0) throw ValidationError("ppo minibatch is empty");
  if (mb.actions.rows() != n || mb.log_prob_old.size() != n || mb.advantages.size() != n ||
      mb.returns.size() != n || mb.means_old.rows() != n)
    throw ShapeError("ppo minibatch fields differ in length");
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& log_std = actor.log_std;
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();

  MinibatchLoss out;
  auto actor_fwd = numeric::mlp_forward(actor.mlp, mb.obs);
  const Matrix& means = actor_fwd.output;
  const Vector logp = policy::gaussian_log_prob(means, log_std, mb.actions);
  const Vector ratios = (logp - mb.log_prob_old).array().exp().matrix();
  const Vector kl_rows = gaussian_kl(mb.means_old, mb.log_std_old, means, log_std);
  out.kl = kl_rows.mean();
  out.entropy = policy::entropy(actor);

  // d objective / d logp per row.
  Vector dobj_dlogp(n);
  std::size_t clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = ratios[i];
    out.max_ratio_deviation = std::max(out.max_ratio_deviation, std::abs(r - 1.0));
    if (std::abs(r - 1.0) > config.clip_eps) ++clipped;
    if (config.variant == Variant::AdaptiveKl) {
      dobj_dlogp[i] = r * mb.advantages[i];
    } else {
      const double a = mb.advantages[i];
      const double c = std::clamp(r, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
      dobj_dlogp[i] = r * a <= c * a ? r * a : 0.0;
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  out.policy_objective = config.variant == Variant::AdaptiveKl
                             ? adaptive_kl_objective(ratios, mb.advantages, out.kl, beta)
                             : ppo_clip_objective(ratios, mb.advantages, config.clip_eps);

  const Matrix critic_x = critic.input_mode == policy::CriticInput::State
                              ? policy::critic_input(critic, mb.obs, nullptr)
                              : policy::critic_input(critic, mb.obs, &mb.actions);
  auto critic_fwd = numeric::mlp_forward(critic.mlp, critic_x);
  const Vector residual = critic_fwd.output.col(0) - mb.returns;
  out.value_loss = residual.squaredNorm() * inv_n;

  out.total = -out.policy_objective + config.value_coef * out.value_loss - config.entropy_coef * out.entropy;
  if (!with_grads) return out;

  // Loss gradient w.r.t. the Gaussian mean and log_std.
  const Matrix diff = mb.actions - means;  // a - mu
  Matrix grad_mean(n, means.cols());
  Vector grad_log_std = Vector::Constant(log_std.size(), -config.entropy_coef);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = -dobj_dlogp[i] * inv_n;  // dL/dlogp_i
    const Eigen::ArrayXd d = diff.row(i).transpose().array();
    grad_mean.row(i) = (w * d * inv_var).matrix().transpose();
    grad_log_std += (w * (d.square() * inv_var - 1.0)).matrix();
  }
  if (config.variant == Variant::AdaptiveKl && beta != 0.0) {
    const Eigen::ArrayXd var_old = (2.0 * mb.log_std_old.array()).exp();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd dm = (means.row(i) - mb.means_old.row(i)).transpose().array();
      grad_mean.row(i) += (beta * inv_n * dm * inv_var).matrix().transpose();
      grad_log_std += (beta * inv_n * (1.0 - (var_old + dm.square()) * inv_var)).matrix();
    }
  }
  auto actor_back = numeric::mlp_backward(actor.mlp, actor_fwd.cache, grad_mean);
  out.actor_grad.mlp = std::move(actor_back.grads);
  out.actor_grad.log_std = grad_log_std;

  const Matrix grad_value = (2.0 * config.value_coef * inv_n) * residual;
  auto critic_back = numeric::mlp_backward(critic.mlp, critic_fwd.cache, grad_value);
  out.critic_grad = std::move(critic_back.grads);
  return out;
}

PPOState make_ppo_state(const PPOConfig& config) {
  PPOState s;
  s.beta = config.beta_init;
  return s;
}

namespace {

Minibatch gather(const Matrix& obs, const Matrix& actions, const Vector& log_prob_old,
                 const Vector& advantages, const Vector& returns, const Matrix& means_old,
                 const Vector& log_std_old, std::span<const std::size_t> idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Minibatch mb;
  mb.obs.resize(n, obs.cols());
  mb.actions.resize(n, actions.cols());
  mb.means_old.resize(n, means_old.cols());
  mb.log_prob_old.resize(n);
  mb.advantages.resize(n);
  mb.returns.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
    mb.obs.row(k) = obs.row(i);
    mb.actions.row(k) = actions.row(i);
    mb.means_old.row(k) = means_old.row(i);
    mb.log_prob_old[k] = log_prob_old[i];
    mb.advantages[k] = advantages[i];
    mb.returns[k] = returns[i];
  }
  mb.log_std_old = log_std_old;
  return mb;
}

}  // namespace

PPOStats ppo_update(policy::ActorParams& actor, policy::CriticParams& critic, PPOState& state,
                    const RolloutBatch& batch, const PPOConfig& config, Rng& rng) {
  batch.validate();
  if (batch.size() == 0) throw ValidationError("ppo_update: empty batch");
  const auto n = batch.size();

  const Vector rewards = batch.combined_rewards(config.bonus_weight);
  auto gae = compute_gae(rewards, batch.values, 0.0, batch.dones, config.gamma, config.gae_lambda);
  const Vector advantages = normalize_advantages(gae.advantages);

  // theta_old snapshot.
  const Matrix means_old = numeric::mlp_predict(actor.mlp, batch.obs);
  const Vector log_std_old = actor.log_std;

  PPOStats stats;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto mbs = static_cast<std::size_t>(config.minibatch_size);
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mbs) {
      const auto len = std::min(mbs, n - start);
      const auto mb = gather(batch.obs, batch.actions, batch.log_prob_old, advantages, gae.returns,
                             means_old, log_std_old, std::span(order).subspan(start, len));
      auto loss = ppo_minibatch_loss(actor, critic, mb, config, state.beta);
      if (!std::isfinite(loss.total))
        throw NumericError("ppo loss is not finite (epoch " + std::to_string(epoch) + ", minibatch " +
                           std::to_string(stats.minibatches) + ")");
      if (stats.minibatches == 0) {
        stats.first_max_ratio_deviation = loss.max_ratio_deviation;
        stats.first_clip_fraction = loss.clip_fraction;
      }
      policy_loss += -loss.policy_objective;
      value_loss += loss.value_loss;
      clip_fraction += loss.clip_fraction;
      ++stats.minibatches;

      auto at = actor.tensors();
      auto ag = std::as_const(loss.actor_grad).tensors();
      numeric::adam_step(state.actor_adam, at, ag, config.lr);
      actor.clamp_log_std();
      numeric::adam_step(state.critic_adam, critic.mlp, loss.critic_grad, config.lr);
    }
  }
  const double m = static_cast<double>(stats.minibatches);
  stats.policy_loss = policy_loss / m;
  stats.value_loss = value_loss / m;
  stats.clip_fraction = clip_fraction / m;
  stats.entropy = policy::entropy(actor);

  const Matrix means_new = numeric::mlp_predict(actor.mlp, batch.obs);
  const Vector logp_new = policy::gaussian_log_prob(means_new, actor.log_std, batch.actions);
  stats.approx_kl = (batch.log_prob_old - logp_new).mean();
  stats.mean_kl = gaussian_kl(means_old, log_std_old, means_new, actor.log_std).mean();
  if (config.variant == Variant::AdaptiveKl)
    state.beta = update_beta(state.beta, stats.mean_kl, config.kl_target, config.kl_a, config.kl_b);
  stats.beta = state.beta;
  if (!std::isfinite(stats.approx_kl) || !std::isfinite(stats.policy_loss))
    throw NumericError("ppo statistics are not finite");
  return stats;
}

}  // namespace invrec::optim
