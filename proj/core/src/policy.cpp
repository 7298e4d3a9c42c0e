#include "invrec/policy.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "invrec/errors.hpp"

namespace invrec::policy {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix as_row(const Vector& v) { return v.transpose(); }

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace

std::vector<std::span<double>> ActorParams::tensors() {
  auto t = mlp.tensors();
  t.emplace_back(log_std.data(), static_cast<std::size_t>(log_std.size()));
  return t;
}

std::vector<std::span<const double>> ActorParams::tensors() const {
  auto t = mlp.tensors();
  t.emplace_back(log_std.data(), static_cast<std::size_t>(log_std.size()));
  return t;
}

ActorParams ActorParams::zeros_like() const {
  return {mlp.zeros_like(), Vector::Zero(log_std.size())};
}

void ActorParams::clamp_log_std() { log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

ActorParams make_actor(Eigen::Index obs_dim, Eigen::Index hidden, Eigen::Index action_dim, Rng& rng) {
  ActorParams a;
  a.mlp = numeric::make_mlp({obs_dim, hidden, hidden, action_dim}, numeric::Head::Tanh, rng);
  a.log_std = Vector::Constant(action_dim, kLogStdInit);
  return a;
}

CriticParams make_critic(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden,
                         CriticInput mode, Rng& rng) {
  CriticParams c;
  c.input_mode = mode;
  const auto in = mode == CriticInput::State ? obs_dim : obs_dim + action_dim;
  c.mlp = numeric::make_mlp({in, hidden, hidden, 1}, numeric::Head::Identity, rng);
  return c;
}

Vector mean_action(const ActorParams& actor, const Vector& obs) {
  require_finite(obs, "observation");
  return numeric::mlp_predict(actor.mlp, as_row(obs)).row(0).transpose();
}

Vector gaussian_log_prob(const Matrix& means, const Vector& log_std, const Matrix& actions) {
  if (means.rows() != actions.rows() || means.cols() != actions.cols() || means.cols() != log_std.size())
    throw ShapeError("gaussian_log_prob: shape mismatch");
  const double d = static_cast<double>(log_std.size());
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const double norm = log_std.sum() + 0.5 * d * kLog2Pi;
  Vector out(means.rows());
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    const Eigen::ArrayXd z = (actions.row(i) - means.row(i)).transpose().array() * inv_std;
    out[i] = -0.5 * z.square().sum() - norm;
  }
  return out;
}

Action act(const ActorParams& actor, const Vector& obs, ActMode mode, Rng& rng) {
  const Vector mu = mean_action(actor, obs);
  Action out;
  if (mode == ActMode::Deterministic) {
    out.action = mu;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    out.action.resize(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i)
      out.action[i] = mu[i] + std::exp(actor.log_std[i]) * normal(rng);
  }
  out.log_prob = gaussian_log_prob(as_row(mu), actor.log_std, as_row(out.action))[0];
  return out;
}

double log_prob(const ActorParams& actor, const Vector& obs, const Vector& action) {
  if (action.size() != actor.action_dim()) throw ShapeError("log_prob: action size mismatch");
  const Vector mu = mean_action(actor, obs);
  return gaussian_log_prob(as_row(mu), actor.log_std, as_row(action))[0];
}

double entropy(const ActorParams& actor) {
  const double d = static_cast<double>(actor.log_std.size());
  return actor.log_std.sum() + 0.5 * d * (1.0 + kLog2Pi);
}

Matrix critic_input(const CriticParams& critic, const Matrix& obs, const Matrix* actions) {
  if (critic.input_mode == CriticInput::State) {
    if (actions != nullptr) throw ValidationError("state-mode critic does not take an action");
    return obs;
  }
  if (actions == nullptr) throw ValidationError("state-action critic requires an action");
  if (actions->rows() != obs.rows()) throw ShapeError("critic_input: row mismatch");
  Matrix x(obs.rows(), obs.cols() + actions->cols());
  x << obs, *actions;
  return x;
}

double value(const CriticParams& critic, const Vector& obs, const Vector* action) {
  require_finite(obs, "observation");
  const Matrix o = as_row(obs);
  if (action == nullptr) return numeric::mlp_predict(critic.mlp, critic_input(critic, o, nullptr))(0, 0);
  const Matrix a = as_row(*action);
  return numeric::mlp_predict(critic.mlp, critic_input(critic, o, &a))(0, 0);
}

}  // namespace invrec::policy
