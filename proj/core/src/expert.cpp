#include "invrec/expert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "invrec/errors.hpp"

namespace invrec::expert {

OUState make_ou(Eigen::Index dim, double theta, double mu, double sigma, double scale) {
  return {Vector::Zero(dim), theta, mu, sigma, scale};
}

Vector ou_next(OUState& state, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < state.x.size(); ++i)
    state.x[i] += state.theta * (state.mu - state.x[i]) + state.sigma * normal(rng);
  return state.scale * state.x;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > items_.size())
    throw ValidationError("cannot sample " + std::to_string(n) + " from a buffer of " +
                          std::to_string(items_.size()));
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items_[idx[i]]);
  return out;
}

void soft_update(MLPParams& target, const MLPParams& online, double tau) {
  if (!target.same_shape(online)) throw ShapeError("soft_update: target and online shapes differ");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("soft_update: tau must be in [0, 1]");
  for (std::size_t k = 0; k < target.layers.size(); ++k) {
    auto& t = target.layers[k];
    const auto& o = online.layers[k];
    t.weights = (1.0 - tau) * t.weights + tau * o.weights;
    t.bias = (1.0 - tau) * t.bias + tau * o.bias;
  }
}

void DDPGConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ddpg.gamma must be in [0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("ddpg.tau must be in [0, 1]");
  if (hidden < 1) throw ConfigError("ddpg.hidden must be >= 1");
  if (buffer_size < 1) throw ConfigError("ddpg.buffer_size must be >= 1");
  if (episodes < 1) throw ConfigError("ddpg.episodes must be >= 1");
  if (!(lr_actor >= 0.0 && lr_critic >= 0.0)) throw ConfigError("ddpg learning rates must be >= 0");
  if (batch_size < 1 || static_cast<std::size_t>(batch_size) > buffer_size)
    throw ConfigError("ddpg.batch_size must be in [1, ddpg.buffer_size]");
  if (!(ou_sigma >= 0.0 && ou_scale >= 0.0)) throw ConfigError("ddpg OU sigma and scale must be >= 0");
  if (!(ou_theta >= 0.0 && ou_theta <= 1.0)) throw ConfigError("ddpg.ou_theta must be in [0, 1]");
  if (plateau_window < 1) throw ConfigError("ddpg.plateau_window must be >= 1");
  if (eval_episodes < 1) throw ConfigError("ddpg.eval_episodes must be >= 1");
  if (!(final_init >= 0.0)) throw ConfigError("ddpg.final_init must be >= 0");
  if (eval_every < 1) throw ConfigError("ddpg.eval_every must be >= 1");
  if (!(preact_penalty >= 0.0)) throw ConfigError("ddpg.preact_penalty must be >= 0");
  if (!(critic_weight_decay >= 0.0)) throw ConfigError("ddpg.critic_weight_decay must be >= 0");
}

DDPGNets make_ddpg(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden, Rng& rng,
                   double final_init) {
  DDPGNets n;
  n.actor = numeric::make_mlp({obs_dim, hidden, hidden, action_dim}, numeric::Head::Tanh, rng);
  n.critic = numeric::make_mlp({obs_dim + action_dim, hidden, hidden, 1}, numeric::Head::Identity, rng);
  if (final_init > 0.0) {
    std::uniform_real_distribution<double> small(-final_init, final_init);
    for (auto* net : {&n.actor, &n.critic}) {
      auto& w = net->layers.back().weights;
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = small(rng);
    }
  }
  n.actor_target = n.actor;
  n.critic_target = n.critic;
  return n;
}

namespace {

struct BatchMatrices {
  Matrix obs, actions, next_obs;
  Vector rewards, not_done;
};

BatchMatrices stack(const std::vector<Transition>& batch) {
  if (batch.empty()) throw ValidationError("ddpg batch is empty");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto od = batch.front().obs.size();
  const auto ad = batch.front().action.size();
  BatchMatrices m{Matrix(n, od), Matrix(n, ad), Matrix(n, od), Vector(n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = batch[static_cast<std::size_t>(i)];
    m.obs.row(i) = t.obs.transpose();
    m.actions.row(i) = t.action.transpose();
    m.next_obs.row(i) = t.next_obs.transpose();
    m.rewards[i] = t.reward;
    m.not_done[i] = t.done ? 0.0 : 1.0;
  }
  return m;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix x(a.rows(), a.cols() + b.cols());
  x << a, b;
  return x;
}

Vector td_targets(const DDPGNets& nets, const BatchMatrices& m, double gamma) {
  const Matrix next_actions = numeric::mlp_predict(nets.actor_target, m.next_obs);
  const Vector next_q = numeric::mlp_predict(nets.critic_target, hcat(m.next_obs, next_actions)).col(0);
  return m.rewards / static_cast<double>(env::kPageSize) + gamma * m.not_done.cwiseProduct(next_q);
}

}  // namespace

double ddpg_critic_loss(const DDPGNets& nets, const std::vector<Transition>& batch, double gamma,
                        numeric::MLPGrads* grad) {
  const auto m = stack(batch);
  const Vector y = td_targets(nets, m, gamma);
  auto fwd = numeric::mlp_forward(nets.critic, hcat(m.obs, m.actions));
  const Vector residual = fwd.output.col(0) - y;
  const double inv_n = 1.0 / static_cast<double>(residual.size());
  if (grad != nullptr) {
    const Matrix g = (2.0 * inv_n) * residual;
    *grad = numeric::mlp_backward(nets.critic, fwd.cache, g).grads;
  }
  return residual.squaredNorm() * inv_n;
}

DDPGStats ddpg_update(DDPGNets& nets, const std::vector<Transition>& batch, double gamma, double tau,
                      double lr_actor, double lr_critic, double preact_penalty,
                      double critic_weight_decay) {
  const auto m = stack(batch);
  const auto n = m.obs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  DDPGStats stats;

  // Critic.
  {
    const Vector y = td_targets(nets, m, gamma);
    auto fwd = numeric::mlp_forward(nets.critic, hcat(m.obs, m.actions));
    const Vector residual = fwd.output.col(0) - y;
    stats.q_loss = residual.squaredNorm() * inv_n;
    if (!std::isfinite(stats.q_loss)) throw NumericError("ddpg critic loss is not finite");
    const Matrix g = (2.0 * inv_n) * residual;
    auto back = numeric::mlp_backward(nets.critic, fwd.cache, g);
    if (critic_weight_decay > 0.0) {
      for (std::size_t l = 0; l < back.grads.layers.size(); ++l)
        back.grads.layers[l].weights += critic_weight_decay * nets.critic.layers[l].weights;
    }
    numeric::adam_step(nets.critic_adam, nets.critic, back.grads, lr_critic);
  }

  // Actor: descend -mean Q(s, actor(s)) plus the pre-activation penalty. The
  // tanh head is applied by hand so the penalty sees the pre-activations.
  {
    MLPParams linear = nets.actor;
    linear.head = numeric::Head::Identity;
    auto actor_fwd = numeric::mlp_forward(linear, m.obs);
    const Matrix actions = actor_fwd.output.array().tanh().matrix();
    auto critic_fwd = numeric::mlp_forward(nets.critic, hcat(m.obs, actions));
    stats.actor_objective = critic_fwd.output.mean();
    if (!std::isfinite(stats.actor_objective)) throw NumericError("ddpg actor objective is not finite");
    const Matrix g = Matrix::Constant(n, 1, -inv_n);
    auto critic_back = numeric::mlp_backward(nets.critic, critic_fwd.cache, g);
    const Matrix grad_action = critic_back.grad_input.rightCols(actions.cols());
    const Matrix grad_pre = (grad_action.array() * (1.0 - actions.array().square())).matrix() +
                            (2.0 * preact_penalty * inv_n) * actor_fwd.output;
    auto actor_back = numeric::mlp_backward(linear, actor_fwd.cache, grad_pre);
    numeric::adam_step(nets.actor_adam, nets.actor, actor_back.grads, lr_actor);
  }

  soft_update(nets.critic_target, nets.critic, tau);
  soft_update(nets.actor_target, nets.actor, tau);
  return stats;
}

double evaluate_actor_ctr(const MLPParams& actor, const env::Environment& env, int episodes,
                          std::uint64_t seed) {
  if (episodes < 1) throw ValidationError("evaluation needs at least one episode");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    auto [state, obs] = env::env_reset(env, derive_seed(seed, {0xe7a1, static_cast<std::uint64_t>(e)}));
    int clicks = 0;
    int steps = 0;
    while (!state.done) {
      const Vector a = numeric::mlp_predict(actor, obs.transpose()).row(0).transpose();
      auto r = env::env_step(env, state, a);
      clicks += r.reward;
      ++steps;
      obs = std::move(r.observation);
    }
    total += static_cast<double>(clicks) / (static_cast<double>(env::kPageSize) * steps);
  }
  return total / episodes;
}

ExpertTrainingResult train_expert(const env::EnvConfig& env_config, const DDPGConfig& config,
                                  int episodes, std::uint64_t seed, const ExpertProgress& progress) {
  config.validate();
  if (episodes < 1) throw ValidationError("train_expert needs at least one episode");
  const env::Environment env(env_config);
  Rng init_rng = make_rng(seed, {0xdd96, 0});
  Rng noise_rng = make_rng(seed, {0xdd96, 1});
  Rng sample_rng = make_rng(seed, {0xdd96, 2});

  ExpertTrainingResult result;
  DDPGNets nets = make_ddpg(env::kObsDim, env::kActionDim, config.hidden, init_rng, config.final_init);
  ReplayBuffer buffer(config.buffer_size);
  OUState ou = make_ou(env::kActionDim, config.ou_theta, config.ou_mu, config.ou_sigma, config.ou_scale);
  const auto eval_seed = derive_seed(seed, {0xe7a1});
  result.nets = nets;
  result.best_eval_ctr = -1.0;
  double best_at_window_start = -1.0;

  for (int e = 0; e < episodes; ++e) {
    auto [state, obs] = env::env_reset(env, derive_seed(seed, {0x7a1, static_cast<std::uint64_t>(e)}));
    ou.x.setZero();
    ExpertCurvePoint point{e, 0, 0.0, 0.0};
    while (!state.done) {
      Vector a = numeric::mlp_predict(nets.actor, obs.transpose()).row(0).transpose();
      a = (a + ou_next(ou, noise_rng)).cwiseMax(-1.0).cwiseMin(1.0);
      auto r = env::env_step(env, state, a);
      point.env_reward += r.reward;
      point.steps += 1;
      buffer.push({obs, a, static_cast<double>(r.reward), r.observation, r.done});
      obs = std::move(r.observation);
      if (buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
        const auto batch = buffer.sample(static_cast<std::size_t>(config.batch_size), sample_rng);
        ddpg_update(nets, batch, config.gamma, config.tau, config.lr_actor, config.lr_critic,
                    config.preact_penalty, config.critic_weight_decay);
      }
    }
    point.ctr = point.env_reward / (static_cast<double>(env::kPageSize) * point.steps);
    result.curve.push_back(point);
    result.episodes_run = e + 1;

    const bool last = e + 1 == episodes;
    if ((e + 1) % config.eval_every == 0 || last) {
      const double ctr = evaluate_actor_ctr(nets.actor, env, config.eval_episodes, eval_seed);
      ExpertEvalPoint ep{e + 1, ctr};
      result.evaluations.push_back(ep);
      if (progress) progress(ep);
      if (ctr > result.best_eval_ctr) {
        result.best_eval_ctr = ctr;
        result.nets = nets;
      }
    }
    if ((e + 1) % config.plateau_window == 0) {
      if (e + 1 >= config.min_episodes && best_at_window_start > 0.0 &&
          result.best_eval_ctr < best_at_window_start * (1.0 + config.plateau_tol))
        break;
      best_at_window_start = result.best_eval_ctr;
    }
  }
  return result;
}

ExpertDataset collect_expert(const MLPParams& actor, const env::EnvConfig& env_config,
                             std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw ValidationError("collect_expert needs n_pairs >= 1");
  const env::Environment env(env_config);
  ExpertDataset ds;
  ds.seed = seed;
  ds.states.resize(static_cast<Eigen::Index>(n_pairs), env::kObsDim);
  ds.actions.resize(static_cast<Eigen::Index>(n_pairs), env::kActionDim);
  std::size_t filled = 0;
  long total_clicks = 0;
  long total_steps = 0;
  double ctr_sum = 0.0;
  while (filled < n_pairs) {
    auto [state, obs] =
        env::env_reset(env, derive_seed(seed, {0xc011, static_cast<std::uint64_t>(ds.episodes)}));
    int clicks = 0;
    int steps = 0;
    while (!state.done) {
      const Vector a = numeric::mlp_predict(actor, obs.transpose()).row(0).transpose();
      if (filled < n_pairs) {
        ds.states.row(static_cast<Eigen::Index>(filled)) = obs.transpose();
        ds.actions.row(static_cast<Eigen::Index>(filled)) = a.transpose();
        ++filled;
      }
      auto r = env::env_step(env, state, a);
      clicks += r.reward;
      ++steps;
      obs = std::move(r.observation);
    }
    total_clicks += clicks;
    total_steps += steps;
    ctr_sum += static_cast<double>(clicks) / (static_cast<double>(env::kPageSize) * steps);
    ++ds.episodes;
  }
  ds.mean_env_reward = static_cast<double>(total_clicks) / static_cast<double>(total_steps);
  ds.mean_ctr = ctr_sum / ds.episodes;
  return ds;
}

}  // namespace invrec::expert
