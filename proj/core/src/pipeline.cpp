#include "invrec/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "invrec/checkpoint.hpp"
#include "invrec/errors.hpp"
#include "invrec/metrics.hpp"

namespace invrec::pipeline {

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("run.iterations must be >= 1");
  if (episodes_per_iteration < 1) throw ConfigError("run.episodes_per_iteration must be >= 1");
  if (!(disc_lr >= 0.0)) throw ConfigError("run.disc_lr must be >= 0");
  if (disc_updates_per_iteration < 0) throw ConfigError("run.disc_updates_per_iteration must be >= 0");
  if (eval_episodes < 1) throw ConfigError("run.eval_episodes must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be >= 0");
  if (hidden < 1 || disc_hidden < 1) throw ConfigError("run.hidden and run.disc_hidden must be >= 1");
  if (expert_pairs < 1 || expert_pairs > 100'000'000) throw ConfigError("run.expert_pairs must be in [1, 1e8]");
  if (js_bins < 2) throw ConfigError("run.js_bins must be >= 2");
}

void Settings::validate() const {
  env.validate();
  ppo.validate();
  ddpg.validate();
  run.validate();
}

double ctr(std::span<const int> episode_rewards, long n_steps) {
  if (n_steps <= 0) throw ValidationError("ctr needs at least one step");
  long total = 0;
  for (int r : episode_rewards) {
    if (r < 0 || r > env::kPageSize) throw ValidationError("step reward outside 0..10");
    total += r;
  }
  return static_cast<double>(total) / (static_cast<double>(env::kPageSize) * static_cast<double>(n_steps));
}

Learner make_learner(const RunConfig& run, Rng& rng) {
  Learner l;
  l.actor = policy::make_actor(env::kObsDim, run.hidden, env::kActionDim, rng);
  l.critic = policy::make_critic(env::kObsDim, env::kActionDim, run.hidden, run.critic_input, rng);
  l.disc = disc::make_discriminator(env::kObsDim, env::kActionDim, run.disc_hidden, rng);
  return l;
}

double RolloutResult::mean_ctr() const {
  if (episode_clicks.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t e = 0; e < episode_clicks.size(); ++e)
    s += static_cast<double>(episode_clicks[e]) / (static_cast<double>(env::kPageSize) * episode_steps[e]);
  return s / static_cast<double>(episode_clicks.size());
}

disc::Pairs RolloutResult::pairs() const { return {batch.obs, batch.actions}; }

RolloutResult rollout(const env::Environment& env, const Learner& learner, int n_episodes,
                      std::uint64_t seed) {
  if (n_episodes < 1) throw ValidationError("rollout needs at least one episode");
  std::vector<Vector> obs_rows;
  std::vector<Vector> action_rows;
  std::vector<double> logps;
  std::vector<double> rewards;
  RolloutResult out;
  auto& b = out.batch;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(e)});
    auto [state, obs] = env::env_reset(env, rng());
    b.episode_starts.push_back(b.dones.size());
    int clicks = 0;
    int steps = 0;
    while (!state.done) {
      auto a = policy::act(learner.actor, obs, policy::ActMode::Stochastic, rng);
      auto r = env::env_step(env, state, a.action);
      obs_rows.push_back(std::move(obs));
      action_rows.push_back(std::move(a.action));
      logps.push_back(a.log_prob);
      rewards.push_back(static_cast<double>(r.reward) / env::kPageSize);
      b.dones.push_back(r.done);
      clicks += r.reward;
      ++steps;
      obs = std::move(r.observation);
    }
    out.episode_clicks.push_back(clicks);
    out.episode_steps.push_back(steps);
  }
  const auto n = static_cast<Eigen::Index>(b.dones.size());
  b.obs.resize(n, env::kObsDim);
  b.actions.resize(n, env::kActionDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    b.obs.row(i) = obs_rows[static_cast<std::size_t>(i)].transpose();
    b.actions.row(i) = action_rows[static_cast<std::size_t>(i)].transpose();
  }
  b.log_prob_old = Eigen::Map<const Vector>(logps.data(), n);
  b.env_reward = Eigen::Map<const Vector>(rewards.data(), n);
  b.bonus_reward = disc::bonus_rewards(learner.disc, out.pairs());
  const Matrix critic_x = learner.critic.input_mode == policy::CriticInput::State
                              ? policy::critic_input(learner.critic, b.obs, nullptr)
                              : policy::critic_input(learner.critic, b.obs, &b.actions);
  b.values = numeric::mlp_predict(learner.critic.mlp, critic_x).col(0);
  return out;
}

namespace {

EvalResult summarize(std::vector<double> ctrs, std::vector<int> rewards) {
  EvalResult r;
  const auto n = static_cast<double>(ctrs.size());
  double sum = 0.0;
  for (double c : ctrs) sum += c;
  r.mean_ctr = sum / n;
  double var = 0.0;
  for (double c : ctrs) var += (c - r.mean_ctr) * (c - r.mean_ctr);
  const double sd = ctrs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  r.ctr_half_width = 1.96 * sd / std::sqrt(n);
  double rsum = 0.0;
  for (int x : rewards) rsum += x;
  r.mean_episode_reward = rsum / n;
  r.episode_ctr = std::move(ctrs);
  r.episode_reward = std::move(rewards);
  return r;
}

}  // namespace

EvalResult evaluate_rule(const ActionRule& rule, const env::EnvConfig& env_config, int n_episodes,
                         std::uint64_t seed) {
  if (n_episodes < 1) throw ValidationError("evaluate needs at least one episode");
  const env::Environment env(env_config);
  std::vector<double> ctrs;
  std::vector<int> rewards;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = make_rng(seed, {0xe7a1, static_cast<std::uint64_t>(e)});
    auto [state, obs] = env::env_reset(env, rng());
    std::vector<int> step_rewards;
    while (!state.done) {
      const Vector a = rule(state, obs, rng);
      auto r = env::env_step(env, state, a);
      step_rewards.push_back(r.reward);
      obs = std::move(r.observation);
    }
    ctrs.push_back(ctr(step_rewards, static_cast<long>(step_rewards.size())));
    int total = 0;
    for (int x : step_rewards) total += x;
    rewards.push_back(total);
  }
  return summarize(std::move(ctrs), std::move(rewards));
}

EvalResult evaluate(const policy::ActorParams& actor, const env::EnvConfig& env_config, int n_episodes,
                    std::uint64_t seed, bool deterministic) {
  const auto mode = deterministic ? policy::ActMode::Deterministic : policy::ActMode::Stochastic;
  return evaluate_rule(
      [&](const env::EnvState&, const Vector& obs, Rng& rng) { return policy::act(actor, obs, mode, rng).action; },
      env_config, n_episodes, seed);
}

ActionRule random_rule() {
  return [](const env::EnvState&, const Vector&, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector a(env::kActionDim);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = u(rng);
    return a;
  };
}

double js_from_histograms(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ValidationError("js_from_histograms: histograms differ in size");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += q[i] * std::log(q[i] / m);
  }
  return js;
}

double occupancy_js(const disc::Pairs& learner, const disc::Pairs& expert, int bins,
                    std::uint64_t projection_seed) {
  if (learner.size() == 0 || expert.size() == 0) throw ValidationError("occupancy_js: empty pair set");
  if (bins < 2) throw ValidationError("occupancy_js: bins must be >= 2");
  const Matrix xl = learner.joined();
  const Matrix xe = expert.joined();
  if (xl.cols() != xe.cols()) throw ShapeError("occupancy_js: pair widths differ");

  Rng rng = make_rng(projection_seed, {0x0cc});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix proj(xl.cols(), 2);
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = normal(rng);
  const Matrix pl = xl * proj;
  const Matrix pe = xe * proj;

  std::array<double, 2> lo{}, hi{};
  for (int d = 0; d < 2; ++d) {
    lo[d] = std::min(pl.col(d).minCoeff(), pe.col(d).minCoeff());
    hi[d] = std::max(pl.col(d).maxCoeff(), pe.col(d).maxCoeff());
  }
  auto cell = [&](const Matrix& pts, Eigen::Index i) {
    std::array<int, 2> c{};
    for (int d = 0; d < 2; ++d) {
      const double span = hi[d] - lo[d];
      int k = span > 0.0 ? static_cast<int>((pts(i, d) - lo[d]) / span * bins) : 0;
      c[d] = std::clamp(k, 0, bins - 1);
    }
    return static_cast<std::size_t>(c[0] * bins + c[1]);
  };
  const auto cells = static_cast<std::size_t>(bins * bins);
  std::vector<double> hp(cells, 0.0), hq(cells, 0.0);
  for (Eigen::Index i = 0; i < pl.rows(); ++i) hp[cell(pl, i)] += 1.0;
  for (Eigen::Index i = 0; i < pe.rows(); ++i) hq[cell(pe, i)] += 1.0;
  for (auto& v : hp) v /= static_cast<double>(pl.rows());
  for (auto& v : hq) v /= static_cast<double>(pe.rows());
  return js_from_histograms(hp, hq);
}

namespace {

disc::Pairs sample_expert(const expert::ExpertDataset& data, Eigen::Index n, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, data.size() - 1);
  disc::Pairs p{Matrix(n, data.states.cols()), Matrix(n, data.actions.cols())};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = pick(rng);
    p.obs.row(i) = data.states.row(k);
    p.actions.row(i) = data.actions.row(k);
  }
  return p;
}

io::ArraySet learner_arrays(const Learner& l) {
  io::ArraySet a;
  io::append_actor(a, l.actor);
  io::append_critic(a, l.critic);
  io::append_disc(a, l.disc);
  return a;
}

std::string render_js(std::span<const double> js) {
  std::string out = "iteration,occupancy_js\n";
  for (std::size_t i = 0; i < js.size(); ++i) out += std::to_string(i + 1) + "," + io::format_number(js[i]) + "\n";
  return out;
}

std::string join_lines(std::span<const std::string> lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

RunResult train_invrec(const Settings& settings, const expert::ExpertDataset& expert_data,
                       const RunHooks& hooks) {
  settings.validate();
  if (expert_data.size() == 0) throw ConfigError("expert dataset is empty");
  if (expert_data.states.cols() != env::kObsDim || expert_data.actions.cols() != env::kActionDim)
    throw ConfigError("expert dataset has the wrong dimensions");
  const auto& run = settings.run;
  const env::Environment env(settings.env);
  const std::filesystem::path out_dir = run.out_dir;
  if (!run.out_dir.empty()) std::filesystem::create_directories(out_dir);

  Rng init_rng = make_rng(run.seed, {0x1ea7});
  Rng expert_rng = make_rng(run.seed, {0xe9e7});
  Rng ppo_rng = make_rng(run.seed, {0x990});

  RunResult result;
  result.learner = make_learner(run, init_rng);
  auto& learner = result.learner;
  numeric::AdamState disc_adam;
  auto ppo_state = optim::make_ppo_state(settings.ppo);

  auto persist = [&](const Learner& snapshot) {
    if (run.out_dir.empty()) return;
    io::save_checkpoint(out_dir / "checkpoint.irlr", learner_arrays(snapshot));
    if (!result.stats.empty()) io::write_metrics(out_dir / "metrics.csv", result.stats);
    io::write_text_file(out_dir / "events.log", join_lines(result.events));
    io::write_text_file(out_dir / "js.csv", render_js(result.occupancy_js));
  };

  for (int it = 1; it <= run.iterations; ++it) {
    const Learner last_good = learner;
    try {
      const auto it_key = static_cast<std::uint64_t>(it);
      auto ro = rollout(env, learner, run.episodes_per_iteration, derive_seed(run.seed, {0x4011, it_key}));
      const auto steps = static_cast<long>(ro.batch.size());
      result.events.push_back("iteration " + std::to_string(it) + " rollout episodes=" +
                              std::to_string(run.episodes_per_iteration) + " steps=" + std::to_string(steps));

      const auto learner_pairs = ro.pairs();
      IterationStats st;
      st.iteration = it;
      st.episodes = run.episodes_per_iteration;
      st.steps = steps;
      st.ctr = ro.mean_ctr();
      st.mean_env_reward = ro.batch.env_reward.mean() * env::kPageSize;

      const auto expert_pairs = sample_expert(expert_data, learner_pairs.size(), expert_rng);
      result.occupancy_js.push_back(occupancy_js(learner_pairs, expert_pairs, run.js_bins, run.js_projection_seed));
      for (int k = 0; k < run.disc_updates_per_iteration; ++k) {
        const auto upd = disc::disc_update(learner.disc, disc_adam, learner_pairs, expert_pairs, run.disc_lr);
        if (k == 0) st.disc_loss = upd.loss_before;
        result.events.push_back("iteration " + std::to_string(it) + " disc_update " + std::to_string(k + 1));
      }
      // Advantages use the bonus of the discriminator just updated.
      ro.batch.bonus_reward = disc::bonus_rewards(learner.disc, learner_pairs);
      st.mean_bonus = ro.batch.bonus_reward.mean();

      const auto ps = optim::ppo_update(learner.actor, learner.critic, ppo_state, ro.batch, settings.ppo, ppo_rng);
      result.events.push_back("iteration " + std::to_string(it) + " ppo_update epochs=" +
                              std::to_string(settings.ppo.epochs) + " minibatches=" + std::to_string(ps.minibatches));
      st.policy_loss = ps.policy_loss;
      st.value_loss = ps.value_loss;
      st.entropy = ps.entropy;
      st.approx_kl = ps.approx_kl;

      for (double v : {st.mean_env_reward, st.mean_bonus, st.ctr, st.disc_loss, st.policy_loss, st.value_loss,
                       st.entropy, st.approx_kl})
        if (!std::isfinite(v)) throw NumericError("non-finite statistic at iteration " + std::to_string(it));
      result.stats.push_back(st);
      if (hooks.on_iteration) hooks.on_iteration(st);
      if (run.checkpoint_every > 0 && it % run.checkpoint_every == 0) persist(learner);
    } catch (const NumericError&) {
      learner = last_good;
      result.events.push_back("iteration " + std::to_string(it) + " aborted: non-finite value");
      persist(last_good);
      throw;
    }
  }
  result.final_beta = ppo_state.beta;
  persist(learner);
  return result;
}

RunResult train_invrec(const Settings& settings, const RunHooks& hooks) {
  if (settings.run.expert_path.empty()) throw ConfigError("run.expert_path is not set");
  if (!std::filesystem::exists(settings.run.expert_path))
    throw ConfigError("expert dataset not found: " + settings.run.expert_path);
  const auto ds = io::read_expert_dataset(io::load_checkpoint(settings.run.expert_path));
  return train_invrec(settings, ds, hooks);
}

std::vector<GridRow> run_grid(const Settings& base, const expert::ExpertDataset& expert_data,
                              std::span<const double> gae_lambdas, std::span<const double> clip_eps) {
  if (gae_lambdas.empty() || clip_eps.empty()) throw ValidationError("run_grid: empty value list");
  std::vector<GridRow> rows;
  for (double lam : gae_lambdas) {
    for (double eps : clip_eps) {
      Settings s = base;
      s.ppo.gae_lambda = lam;
      s.ppo.clip_eps = eps;
      s.run.out_dir.clear();
      auto r = train_invrec(s, expert_data);
      const auto ev = evaluate(r.learner.actor, s.env, s.run.eval_episodes, derive_seed(s.run.seed, {0x9e1d}), true);
      rows.push_back({lam, eps, ev.mean_ctr, ev.ctr_half_width});
    }
  }
  return rows;
}

std::string format_grid(std::span<const GridRow> rows) {
  std::string out = "gae_lambda,clip_eps,ctr,half_width\n";
  for (const auto& r : rows)
    out += io::format_number(r.gae_lambda) + "," + io::format_number(r.clip_eps) + "," + io::format_number(r.ctr) +
           "," + io::format_number(r.half_width) + "\n";
  return out;
}

}  // namespace invrec::pipeline
