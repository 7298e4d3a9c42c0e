// invrec: one subcommand per pipeline stage, each reading and writing the
// persisted artifacts of its neighbours.
//
//   invrec train-expert   --out runs/expert        -> expert_ddpg.irlr, expert_curve.csv
//   invrec collect-expert --ddpg .../expert_ddpg.irlr --out runs/expert  -> expert_data.irlr
//   invrec train          --expert .../expert_data.irlr --out runs/gail
//   invrec evaluate       --checkpoint runs/gail/checkpoint.irlr
//   invrec grid           --expert .../expert_data.irlr --out runs/grid
//   invrec diag-js        --checkpoint runs/gail/checkpoint.irlr --expert .../expert_data.irlr

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "invrec/checkpoint.hpp"
#include "invrec/config.hpp"
#include "invrec/errors.hpp"
#include "invrec/metrics.hpp"
#include "invrec/pipeline.hpp"

namespace fs = std::filesystem;
using namespace invrec;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed (overrides run.seed)");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--set", c.overrides, "Config override KEY=VALUE (repeatable)");
}

pipeline::Settings load_settings(const Common& c) {
  auto s = c.config.empty() ? io::default_settings() : io::parse_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    io::set_config_value(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) s.run.seed = *c.seed;
  s.validate();
  return s;
}

void prepare_out(const Common& c) {
  if (!c.out.empty()) fs::create_directories(c.out);
}

std::string fmt(double v) { return io::format_number(v); }

void print_eval(const std::string& label, const pipeline::EvalResult& r) {
  std::cout << label << " ctr " << fmt(r.mean_ctr) << " +/- " << fmt(r.ctr_half_width) << " over "
            << r.episode_ctr.size() << " episodes (mean clicks/episode " << fmt(r.mean_episode_reward) << ")\n";
}

pipeline::ActionRule actor_rule(const numeric::MLPParams& mlp) {
  return [mlp](const env::EnvState&, const numeric::Vector& obs, Rng&) {
    return numeric::Vector(numeric::mlp_predict(mlp, obs.transpose()).row(0).transpose());
  };
}

expert::ExpertDataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("no expert dataset given (--expert or run.expert_path)");
  return io::read_expert_dataset(io::load_checkpoint(path));
}

// --- subcommands ---------------------------------------------------------------

struct TrainExpertArgs {
  Common c;
  std::optional<int> episodes;
};

int cmd_train_expert(const TrainExpertArgs& a) {
  const auto s = load_settings(a.c);
  prepare_out(a.c);
  const int episodes = a.episodes.value_or(s.ddpg.episodes);
  const auto res = expert::train_expert(s.env, s.ddpg, episodes, s.run.seed, [](const expert::ExpertEvalPoint& p) {
    std::cout << "episode " << p.episode << " eval ctr " << fmt(p.ctr) << "\n" << std::flush;
  });
  io::ArraySet set;
  io::append_ddpg(set, res.nets);
  const fs::path out = a.c.out;
  io::save_checkpoint(out / "expert_ddpg.irlr", set);
  std::string curve = "episode,steps,env_reward,ctr\n";
  for (const auto& p : res.curve)
    curve += std::to_string(p.episode) + "," + std::to_string(p.steps) + "," + fmt(p.env_reward) + "," + fmt(p.ctr) + "\n";
  io::write_text_file(out / "expert_curve.csv", curve);
  std::cout << "episodes run " << res.episodes_run << ", best eval ctr " << fmt(res.best_eval_ctr) << "\n";
  return 0;
}

struct CollectArgs {
  Common c;
  std::string ddpg;
  std::optional<std::size_t> pairs;
};

int cmd_collect_expert(const CollectArgs& a) {
  const auto s = load_settings(a.c);
  prepare_out(a.c);
  const auto nets = io::read_ddpg(io::load_checkpoint(a.ddpg));
  const auto ds = expert::collect_expert(nets.actor, s.env, a.pairs.value_or(s.run.expert_pairs), s.run.seed);
  io::ArraySet set;
  io::append_expert_dataset(set, ds);
  io::save_checkpoint(fs::path(a.c.out) / "expert_data.irlr", set);
  std::cout << "collected " << ds.size() << " pairs from " << ds.episodes << " episodes, expert ctr "
            << fmt(ds.mean_ctr) << "\n";
  return 0;
}

struct TrainArgs {
  Common c;
  std::string expert;
};

int cmd_train(const TrainArgs& a) {
  auto s = load_settings(a.c);
  if (!a.expert.empty()) s.run.expert_path = a.expert;
  s.run.out_dir = a.c.out;
  pipeline::RunHooks hooks;
  hooks.on_iteration = [](const pipeline::IterationStats& st) {
    std::cout << "iteration " << st.iteration << " ctr " << fmt(st.ctr) << " bonus " << fmt(st.mean_bonus)
              << " disc_loss " << fmt(st.disc_loss) << " approx_kl " << fmt(st.approx_kl) << "\n"
              << std::flush;
  };
  const auto res = pipeline::train_invrec(s, hooks);
  std::cout << "done: " << res.stats.size() << " iterations, final occupancy JS " << fmt(res.occupancy_js.back())
            << "\n";
  return 0;
}

struct EvaluateArgs {
  Common c;
  std::string checkpoint;
  std::string baseline;
  std::optional<int> episodes;
  bool stochastic = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto s = load_settings(a.c);
  const int n = a.episodes.value_or(s.run.eval_episodes);
  const auto seed = derive_seed(s.run.seed, {0xe7a1});
  pipeline::EvalResult r;
  std::string label;
  if (!a.baseline.empty()) {
    if (a.baseline == "random") {
      r = pipeline::evaluate_rule(pipeline::random_rule(), s.env, n, seed);
    } else if (a.baseline == "oracle") {
      r = pipeline::evaluate_rule(
          [](const env::EnvState& st, const numeric::Vector&, Rng&) { return env::Diagnostics::oracle_action(st); },
          s.env, n, seed);
    } else {
      throw ConfigError("unknown baseline '" + a.baseline + "' (expected random or oracle)");
    }
    label = a.baseline;
  } else {
    if (a.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint or --baseline");
    const auto arrays = io::load_checkpoint(a.checkpoint);
    if (io::find_array(arrays, "actor.log_std") != nullptr) {
      r = pipeline::evaluate(io::read_actor(arrays), s.env, n, seed, !a.stochastic);
      label = "learner";
    } else {
      r = pipeline::evaluate_rule(actor_rule(io::read_ddpg(arrays).actor), s.env, n, seed);
      label = "expert";
    }
  }
  print_eval(label, r);
  if (!a.c.out.empty()) {
    prepare_out(a.c);
    std::string csv = "episode,clicks,ctr\n";
    for (std::size_t e = 0; e < r.episode_ctr.size(); ++e)
      csv += std::to_string(e) + "," + std::to_string(r.episode_reward[e]) + "," + fmt(r.episode_ctr[e]) + "\n";
    io::write_text_file(fs::path(a.c.out) / "evaluation.csv", csv);
  }
  return 0;
}

struct GridArgs {
  Common c;
  std::string expert;
  std::vector<double> lambdas{0.95, 0.97, 0.99};
  std::vector<double> eps{0.1, 0.2, 0.3};
};

int cmd_grid(const GridArgs& a) {
  auto s = load_settings(a.c);
  const auto ds = load_dataset(a.expert.empty() ? s.run.expert_path : a.expert);
  s.run.out_dir.clear();
  const auto rows = pipeline::run_grid(s, ds, a.lambdas, a.eps);
  const auto text = pipeline::format_grid(rows);
  std::cout << text;
  if (!a.c.out.empty()) {
    prepare_out(a.c);
    io::write_text_file(fs::path(a.c.out) / "grid.csv", text);
  }
  return 0;
}

struct DiagArgs {
  Common c;
  std::string checkpoint;
  std::string expert;
  std::optional<int> episodes;
};

int cmd_diag_js(const DiagArgs& a) {
  const auto s = load_settings(a.c);
  const auto ds = load_dataset(a.expert.empty() ? s.run.expert_path : a.expert);
  const auto arrays = io::load_checkpoint(a.checkpoint);
  pipeline::Learner learner;
  learner.actor = io::read_actor(arrays);
  learner.critic = io::read_critic(arrays);
  learner.disc = io::read_disc(arrays);
  const env::Environment env(s.env);
  const auto ro = pipeline::rollout(env, learner, a.episodes.value_or(s.run.episodes_per_iteration),
                                    derive_seed(s.run.seed, {0xd1a9}));
  const auto lp = ro.pairs();
  const auto n = std::min<Eigen::Index>(lp.size(), ds.size());
  const disc::Pairs learner_pairs{lp.obs.topRows(n), lp.actions.topRows(n)};
  const disc::Pairs expert_pairs{ds.states.topRows(n), ds.actions.topRows(n)};
  const double js = pipeline::occupancy_js(learner_pairs, expert_pairs, s.run.js_bins, s.run.js_projection_seed);
  std::cout << "occupancy_js " << fmt(js) << " over " << n << " pairs (learner ctr " << fmt(ro.mean_ctr()) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial inverse-RL recommender: expert acquisition, imitation training and evaluation"};
  app.require_subcommand(1);

  TrainExpertArgs te;
  auto* c_te = app.add_subcommand("train-expert", "Train the DDPG expert on the environment reward");
  add_common(c_te, te.c, true);
  c_te->add_option("--episodes", te.episodes, "Episode budget (default ddpg.episodes)");

  CollectArgs ce;
  auto* c_ce = app.add_subcommand("collect-expert", "Roll out the expert and store state-action pairs");
  add_common(c_ce, ce.c, true);
  c_ce->add_option("--ddpg", ce.ddpg, "Expert checkpoint from train-expert")->required()->check(CLI::ExistingFile);
  c_ce->add_option("--pairs", ce.pairs, "Number of pairs (default run.expert_pairs)");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Adversarial imitation training");
  add_common(c_tr, tr.c, true);
  c_tr->add_option("--expert", tr.expert, "Expert dataset (default run.expert_path)");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Evaluate a learner or expert checkpoint, or a baseline");
  add_common(c_ev, ev.c, false);
  c_ev->add_option("--checkpoint", ev.checkpoint, "Learner or expert checkpoint")->check(CLI::ExistingFile);
  c_ev->add_option("--baseline", ev.baseline, "random or oracle");
  c_ev->add_option("--episodes", ev.episodes, "Episodes (default run.eval_episodes)");
  c_ev->add_flag("--stochastic", ev.stochastic, "Sample learner actions instead of using the mean");

  GridArgs gr;
  auto* c_gr = app.add_subcommand("grid", "Train and evaluate one run per (gae_lambda, clip_eps) cell");
  add_common(c_gr, gr.c, false);
  c_gr->add_option("--expert", gr.expert, "Expert dataset (default run.expert_path)");
  c_gr->add_option("--lambdas", gr.lambdas, "gae_lambda values")->delimiter(',');
  c_gr->add_option("--eps", gr.eps, "clip_eps values")->delimiter(',');

  DiagArgs dj;
  auto* c_dj = app.add_subcommand("diag-js", "Occupancy JS divergence between a learner and the expert data");
  add_common(c_dj, dj.c, false);
  c_dj->add_option("--checkpoint", dj.checkpoint, "Learner checkpoint")->required()->check(CLI::ExistingFile);
  c_dj->add_option("--expert", dj.expert, "Expert dataset (default run.expert_path)");
  c_dj->add_option("--episodes", dj.episodes, "Learner episodes (default run.episodes_per_iteration)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_te->parsed()) return cmd_train_expert(te);
    if (c_ce->parsed()) return cmd_collect_expert(ce);
    if (c_tr->parsed()) return cmd_train(tr);
    if (c_ev->parsed()) return cmd_evaluate(ev);
    if (c_gr->parsed()) return cmd_grid(gr);
    if (c_dj->parsed()) return cmd_diag_js(dj);
  } catch (const std::exception& e) {
    std::cerr << "invrec: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
