#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "invrec/errors.hpp"
#include "invrec/optim.hpp"

using namespace invrec;
using numeric::Matrix;
using numeric::Vector;

namespace {

// Explicit double sum: A_t = sum_l (gamma lambda)^l delta_{t+l} up to the episode end.
Vector gae_reference(const Vector& r, const Vector& v, double boot, const std::vector<bool>& done,
                     double gamma, double lambda) {
  const auto n = r.size();
  Vector delta(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double next = done[t] ? 0.0 : (t + 1 < n ? v[t + 1] : boot);
    delta[t] = r[t] + gamma * next - v[t];
  }
  Vector a(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double sum = 0.0;
    double w = 1.0;
    for (Eigen::Index k = t; k < n; ++k) {
      sum += w * delta[k];
      if (done[k]) break;
      w *= gamma * lambda;
    }
    a[t] = sum;
  }
  return a;
}

struct Fixture {
  policy::ActorParams actor;
  policy::CriticParams critic;
  optim::RolloutBatch batch;
};

Fixture make_fixture(std::uint64_t seed, Eigen::Index obs_dim = 7, Eigen::Index act_dim = 3,
                     Eigen::Index n = 40) {
  Rng rng(seed);
  Fixture f;
  f.actor = policy::make_actor(obs_dim, 16, act_dim, rng);
  f.critic = policy::make_critic(obs_dim, act_dim, 16, policy::CriticInput::State, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  auto& b = f.batch;
  b.obs.resize(n, obs_dim);
  b.actions.resize(n, act_dim);
  b.log_prob_old.resize(n);
  b.env_reward.resize(n);
  b.bonus_reward.resize(n);
  b.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector o(obs_dim);
    for (auto& x : o) x = g(rng);
    const auto a = policy::act(f.actor, o, policy::ActMode::Stochastic, rng);
    b.obs.row(i) = o.transpose();
    b.actions.row(i) = a.action.transpose();
    b.log_prob_old[i] = a.log_prob;
    b.env_reward[i] = std::uniform_int_distribution<int>(0, 10)(rng) / 10.0;
    b.bonus_reward[i] = -std::abs(g(rng));
    b.values[i] = policy::value(f.critic, o);
    const bool done = (i % 10 == 9);
    b.dones.push_back(done);
    if (i % 10 == 0) b.episode_starts.push_back(static_cast<std::size_t>(i));
  }
  return f;
}

optim::Minibatch whole_minibatch(const Fixture& f, const policy::ActorParams& old_actor) {
  optim::Minibatch mb;
  mb.obs = f.batch.obs;
  mb.actions = f.batch.actions;
  mb.means_old = numeric::mlp_predict(old_actor.mlp, mb.obs);
  mb.log_std_old = old_actor.log_std;
  mb.log_prob_old = policy::gaussian_log_prob(mb.means_old, mb.log_std_old, mb.actions);
  const auto gae = optim::compute_gae(f.batch.combined_rewards(1.0), f.batch.values, 0.0, f.batch.dones,
                                      0.995, 0.97);
  mb.advantages = optim::normalize_advantages(gae.advantages);
  mb.returns = gae.returns;
  return mb;
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("GAE matches the explicit double sum on 1000 random batches") {
    Rng rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 30);
    std::bernoulli_distribution ends(0.15);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = len(rng);
      Vector r(n), v(n);
      std::vector<bool> done(n);
      for (int t = 0; t < n; ++t) {
        r[t] = g(rng);
        v[t] = g(rng);
        done[t] = ends(rng);
      }
      const double boot = g(rng);
      const double gamma = 0.9 + 0.1 * std::uniform_real_distribution<double>(0, 1)(rng);
      const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
      const auto res = optim::compute_gae(r, v, boot, done, gamma, lambda);
      const Vector ref = gae_reference(r, v, boot, done, gamma, lambda);
      worst = std::max(worst, (res.advantages - ref).cwiseAbs().maxCoeff());
      CHECK((res.returns - (ref + v)).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("GAE with lambda = 0 is the one-step TD error and lambda = 1 the discounted return") {
    const Vector r = (Vector(3) << 1.0, 2.0, 3.0).finished();
    const Vector v = (Vector(3) << 0.5, 0.25, 0.125).finished();
    const std::vector<bool> done{false, false, true};
    const auto td = optim::compute_gae(r, v, 99.0, done, 0.5, 0.0);
    CHECK(td.advantages[0] == doctest::Approx(1.0 + 0.5 * 0.25 - 0.5));
    CHECK(td.advantages[2] == doctest::Approx(3.0 - 0.125));
    const auto mc = optim::compute_gae(r, v, 99.0, done, 0.5, 1.0);
    CHECK(mc.returns[0] == doctest::Approx(1.0 + 0.5 * 2.0 + 0.25 * 3.0));
    CHECK_THROWS_AS(optim::compute_gae(r, v, 0.0, {true}, 0.5, 1.0), ShapeError);
  }

  TEST_CASE("advantage normalization") {
    const Vector a = (Vector(4) << 1.0, 2.0, 3.0, 6.0).finished();
    const Vector z = optim::normalize_advantages(a);
    CHECK(std::abs(z.mean()) < 1e-14);
    CHECK(std::sqrt(z.squaredNorm() / 4.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(optim::normalize_advantages(Vector::Constant(1, 5.0))[0] == 0.0);
    CHECK(optim::normalize_advantages(Vector::Constant(3, 2.0)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("clipped surrogate: worked cases") {
    auto one = [](double r, double a) {
      return optim::ppo_clip_objective(Vector::Constant(1, r), Vector::Constant(1, a), 0.2);
    };
    CHECK(one(1.5, 1.0) == doctest::Approx(1.2));
    CHECK(one(0.5, -1.0) == doctest::Approx(-0.8));
    CHECK(one(1.0, 0.7) == doctest::Approx(0.7));
    CHECK(one(1.5, -1.0) == doctest::Approx(-1.5));  // pessimistic side is unclipped
    CHECK(one(0.5, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(one(0.0, 1.0), ValidationError);
  }

  TEST_CASE("adaptive KL objective and the beta rule") {
    const Vector r = (Vector(2) << 1.0, 2.0).finished();
    const Vector a = (Vector(2) << 1.0, 1.0).finished();
    CHECK(optim::adaptive_kl_objective(r, a, 0.3, 2.0) == doctest::Approx(1.5 - 0.6));
    CHECK(optim::update_beta(1.0, 0.02, 0.01, 1.5, 2.0) == 2.0);
    CHECK(optim::update_beta(1.0, 0.005, 0.01, 1.5, 2.0) == 0.5);
    CHECK(optim::update_beta(1.0, 0.015, 0.01, 1.5, 2.0) == 2.0);  // d == target * a is not below
  }

  TEST_CASE("analytic Gaussian KL") {
    const Matrix m0 = Matrix::Zero(1, 2);
    const Vector ls = Vector::Zero(2);
    CHECK(optim::gaussian_kl(m0, ls, m0, ls)[0] == doctest::Approx(0.0));
    Matrix m1 = m0;
    m1(0, 0) = 1.0;
    CHECK(optim::gaussian_kl(m0, ls, m1, ls)[0] == doctest::Approx(0.5));
    const Vector ls1 = Vector::Constant(2, std::log(2.0));
    // per dim: ln 2 + 1/8 - 1/2
    CHECK(optim::gaussian_kl(m0, ls, m0, ls1)[0] == doctest::Approx(2.0 * (std::log(2.0) + 0.125 - 0.5)));
  }

  TEST_CASE("PPO minibatch loss gradients match central differences") {
    for (auto variant : {optim::Variant::Clip, optim::Variant::AdaptiveKl}) {
      CAPTURE(optim::to_string(variant));
      auto f = make_fixture(21);
      auto old_actor = f.actor;
      // Nudge the current policy away from theta_old so ratios and KL are non-trivial.
      Rng rng(5);
      std::normal_distribution<double> g(0.0, 0.02);
      for (auto t : f.actor.tensors())
        for (double& x : t) x += g(rng);
      const auto mb = whole_minibatch(f, old_actor);
      optim::PPOConfig cfg;
      cfg.variant = variant;
      cfg.clip_eps = 0.5;  // keep probes away from clip kinks
      const double beta = 0.7;
      const auto loss = optim::ppo_minibatch_loss(f.actor, f.critic, mb, cfg, beta);
      CHECK(loss.kl > 0.0);

      auto params = f.actor.tensors();
      for (auto t : f.critic.tensors()) params.push_back(t);
      auto grads = std::as_const(loss.actor_grad).tensors();
      for (auto t : loss.critic_grad.tensors()) grads.emplace_back(t);
      numeric::FiniteDiffOptions opt;
      opt.probes = 300;
      opt.tol = 1e-5;
      const auto report = numeric::finite_diff_check(
          [&] { return optim::ppo_minibatch_loss(f.actor, f.critic, mb, cfg, beta, false).total; },
          params, grads, opt);
      CHECK(report.passed);
      CHECK(report.max_rel_error < 1e-5);
    }
  }

  TEST_CASE("the first minibatch of an update sees ratio exactly 1") {
    auto f = make_fixture(31);
    optim::PPOConfig cfg;
    auto state = optim::make_ppo_state(cfg);
    Rng rng(1);
    const auto stats = optim::ppo_update(f.actor, f.critic, state, f.batch, cfg, rng);
    CHECK(stats.first_max_ratio_deviation < 1e-12);
    CHECK(stats.first_clip_fraction == 0.0);
    CHECK(stats.minibatches == static_cast<std::size_t>(cfg.epochs) * 8);  // 40 rows / 5
    CHECK(std::isfinite(stats.approx_kl));
  }

  TEST_CASE("ppo_update is deterministic given the rng") {
    auto a = make_fixture(41);
    auto b = make_fixture(41);
    optim::PPOConfig cfg;
    cfg.variant = optim::Variant::AdaptiveKl;
    auto sa = optim::make_ppo_state(cfg);
    auto sb = optim::make_ppo_state(cfg);
    Rng ra(3), rb(3);
    const auto x = optim::ppo_update(a.actor, a.critic, sa, a.batch, cfg, ra);
    const auto y = optim::ppo_update(b.actor, b.critic, sb, b.batch, cfg, rb);
    CHECK(x.mean_kl == y.mean_kl);
    CHECK(sa.beta == sb.beta);
    CHECK((sa.beta == 2.0 || sa.beta == 0.5));
    CHECK(a.actor.log_std == b.actor.log_std);
    CHECK(a.actor.mlp.layers[0].weights == b.actor.mlp.layers[0].weights);
  }

  TEST_CASE("a clipped update moves the policy toward positive advantages") {
    // Single state, two actions; the one with the higher reward should gain probability.
    auto f = make_fixture(51, 4, 2, 40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      f.batch.obs.row(i).setConstant(0.3);
      f.batch.env_reward[i] = f.batch.actions(i, 0) > 0.0 ? 1.0 : 0.0;
      f.batch.bonus_reward[i] = 0.0;
    }
    const Vector obs = Vector::Constant(4, 0.3);
    for (Eigen::Index i = 0; i < 40; ++i)
      f.batch.log_prob_old[i] = policy::log_prob(f.actor, obs, f.batch.actions.row(i).transpose());
    const double before = policy::mean_action(f.actor, obs)[0];
    optim::PPOConfig cfg;
    cfg.lr = 1e-3;
    auto state = optim::make_ppo_state(cfg);
    Rng rng(2);
    optim::ppo_update(f.actor, f.critic, state, f.batch, cfg, rng);
    CHECK(policy::mean_action(f.actor, obs)[0] > before);
  }

  TEST_CASE("config validation and variant names") {
    optim::PPOConfig c;
    c.validate();
    CHECK(optim::variant_from_string("clip") == optim::Variant::Clip);
    CHECK(optim::variant_from_string(optim::to_string(optim::Variant::AdaptiveKl)) ==
          optim::Variant::AdaptiveKl);
    CHECK_THROWS_AS(optim::variant_from_string("trpo"), ConfigError);
    c.minibatch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
