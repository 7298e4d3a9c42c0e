// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Optional arguments select criteria by number.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "invrec/checkpoint.hpp"
#include "invrec/config.hpp"
#include "invrec/discriminator.hpp"
#include "invrec/errors.hpp"
#include "invrec/expert.hpp"
#include "invrec/metrics.hpp"
#include "invrec/optim.hpp"
#include "invrec/pipeline.hpp"

using namespace invrec;
using numeric::Matrix;
using numeric::Vector;

namespace {

const std::filesystem::path kOutDir = INVREC_ACCEPTANCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix gaussian_matrix(Eigen::Index r, Eigen::Index c, double shift, double scale, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = shift + scale * g(rng);
  return m;
}

// --- 1: gradient exactness ---------------------------------------------------

double disc_gradient_error() {
  Rng rng(101);
  auto d = disc::make_discriminator(6, 3, 16, rng);
  const disc::Pairs l{gaussian_matrix(12, 6, 0.0, 1.0, rng), gaussian_matrix(12, 3, 0.0, 0.3, rng)};
  const disc::Pairs e{gaussian_matrix(10, 6, 0.0, 1.0, rng), gaussian_matrix(10, 3, 0.8, 0.3, rng)};
  const auto lg = disc::disc_loss_and_grad(d, l, e);
  numeric::FiniteDiffOptions opt;
  opt.probes = 256;
  opt.h = 1e-6;
  opt.tol = 1e-5;
  return numeric::finite_diff_check(
             [&](const numeric::MLPParams& p) { return disc::disc_loss({p, d.clip_eps}, l, e); }, d.mlp,
             lg.grads, opt)
      .max_rel_error;
}

double ppo_gradient_error(optim::Variant variant) {
  Rng rng(202);
  auto actor = policy::make_actor(7, 16, 3, rng);
  auto critic = policy::make_critic(7, 3, 16, policy::CriticInput::State, rng);
  const auto old_actor = actor;
  std::normal_distribution<double> g(0.0, 0.02);
  for (auto t : actor.tensors())
    for (double& x : t) x += g(rng);
  const Eigen::Index n = 20;
  optim::Minibatch mb;
  mb.obs = gaussian_matrix(n, 7, 0.0, 1.0, rng);
  mb.means_old = numeric::mlp_predict(old_actor.mlp, mb.obs);
  mb.log_std_old = old_actor.log_std;
  mb.actions = mb.means_old + gaussian_matrix(n, 3, 0.0, 0.6, rng);
  mb.log_prob_old = policy::gaussian_log_prob(mb.means_old, mb.log_std_old, mb.actions);
  mb.advantages = gaussian_matrix(n, 1, 0.0, 1.0, rng).col(0);
  mb.returns = gaussian_matrix(n, 1, 0.0, 1.0, rng).col(0);
  optim::PPOConfig cfg;
  cfg.variant = variant;
  const double beta = 0.7;
  const auto loss = optim::ppo_minibatch_loss(actor, critic, mb, cfg, beta);
  auto params = actor.tensors();
  for (auto t : critic.tensors()) params.push_back(t);
  auto grads = std::as_const(loss.actor_grad).tensors();
  for (auto t : loss.critic_grad.tensors()) grads.emplace_back(t);
  numeric::FiniteDiffOptions opt;
  opt.probes = 256;
  opt.tol = 1e-5;
  return numeric::finite_diff_check(
             [&] { return optim::ppo_minibatch_loss(actor, critic, mb, cfg, beta, false).total; }, params, grads,
             opt)
      .max_rel_error;
}

double ddpg_gradient_error() {
  Rng rng(303);
  auto nets = expert::make_ddpg(5, 2, 16, rng);
  nets.critic_target = numeric::make_mlp({7, 16, 16, 1}, numeric::Head::Identity, rng);
  std::vector<expert::Transition> batch;
  for (int i = 0; i < 16; ++i) {
    batch.push_back({gaussian_matrix(5, 1, 0.0, 1.0, rng).col(0), gaussian_matrix(2, 1, 0.0, 0.5, rng).col(0),
                     static_cast<double>(i % 11), gaussian_matrix(5, 1, 0.0, 1.0, rng).col(0), i % 5 == 4});
  }
  numeric::MLPGrads grad;
  expert::ddpg_critic_loss(nets, batch, 0.95, &grad);
  numeric::FiniteDiffOptions opt;
  opt.probes = 256;
  opt.tol = 1e-5;
  auto critic = nets.critic;
  return numeric::finite_diff_check(
             [&](const numeric::MLPParams& p) {
               auto copy = nets;
               copy.critic = p;
               return expert::ddpg_critic_loss(copy, batch, 0.95);
             },
             critic, grad, opt)
      .max_rel_error;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  const double e_disc = disc_gradient_error();
  const double e_clip = ppo_gradient_error(optim::Variant::Clip);
  const double e_kl = ppo_gradient_error(optim::Variant::AdaptiveKl);
  const double e_ddpg = ddpg_gradient_error();
  const double t = seconds_since(t0);
  const double worst = std::max({e_disc, e_clip, e_kl, e_ddpg});
  return {worst < 1e-5 && t < 10.0,
          "max rel error disc " + fmt("%.2e", e_disc) + ", ppo clip " + fmt("%.2e", e_clip) + ", ppo kl " +
              fmt("%.2e", e_kl) + ", ddpg critic " + fmt("%.2e", e_ddpg) + " (< 1e-5); " + fmt("%.2f", t) +
              " s (< 10 s)"};
}

// --- 2: GAE oracle -------------------------------------------------------------

Outcome criterion2() {
  const auto t0 = Clock::now();
  Rng rng(404);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 64);
  std::bernoulli_distribution ends(0.1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
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
    const double gamma = 0.9 + 0.0999 * u(rng);
    const double lambda = u(rng);
    const auto res = optim::compute_gae(r, v, boot, done, gamma, lambda);
    for (int t = 0; t < n; ++t) {
      double sum = 0.0;
      double w = 1.0;
      for (int k = t; k < n; ++k) {
        const double next = done[k] ? 0.0 : (k + 1 < n ? v[k + 1] : boot);
        sum += w * (r[k] + gamma * next - v[k]);
        if (done[k]) break;
        w *= gamma * lambda;
      }
      worst = std::max(worst, std::abs(sum - res.advantages[t]));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && t < 5.0,
          "max |recursive - explicit| " + fmt("%.2e", worst) + " over 1000 batches (< 1e-10); " + fmt("%.3f", t) +
              " s (< 5 s)"};
}

// --- 3: clip arithmetic --------------------------------------------------------

Outcome criterion3() {
  auto one = [](double r, double a) {
    return optim::ppo_clip_objective(Vector::Constant(1, r), Vector::Constant(1, a), 0.2);
  };
  const double a = one(1.5, 1.0);
  const double b = one(0.5, -1.0);
  const double c = one(1.0, 0.37);
  const double d = one(1.0, -2.5);
  const bool pass = a == 1.2 && b == -0.8 && c == 0.37 && d == -2.5;
  return {pass, "L(1.5,+1)=" + fmt("%.17g", a) + " L(0.5,-1)=" + fmt("%.17g", b) + " L(1,0.37)=" +
                    fmt("%.17g", c) + " L(1,-2.5)=" + fmt("%.17g", d)};
}

// --- 4: discriminator separability ---------------------------------------------

Outcome criterion4() {
  Rng rng(505);
  auto make_split = [&](double shift) {
    return disc::Pairs{gaussian_matrix(256, 91, 0.0, 1.0, rng), gaussian_matrix(256, 27, shift, 0.3, rng)};
  };
  const auto learner_train = make_split(-0.5);
  const auto expert_train = make_split(0.5);
  const auto learner_test = make_split(-0.5);
  const auto expert_test = make_split(0.5);
  auto d = disc::make_discriminator(91, 27, 128, rng);
  numeric::AdamState adam;
  int steps = 0;
  double acc = disc::accuracy(d, learner_test, expert_test);
  while (steps < 500 && acc < 0.95) {
    disc::disc_update(d, adam, learner_train, expert_train, 0.003);
    ++steps;
    acc = disc::accuracy(d, learner_test, expert_test);
  }
  auto half = d;
  half.mlp.layers.back().weights.setZero();
  half.mlp.layers.back().bias.setZero();
  const double loss = disc::disc_loss(half, learner_test, expert_test);
  const double err = std::abs(loss - 2.0 * std::log(2.0));
  return {acc >= 0.95 && err < 1e-12, "held-out accuracy " + fmt("%.4f", acc) + " after " +
                                          std::to_string(steps) + " Adam steps (>= 0.95 within 500); |L(D=0.5) - 2 ln 2| = " +
                                          fmt("%.1e", err)};
}

// --- 5: OU statistics ----------------------------------------------------------

Outcome criterion5() {
  auto det = expert::make_ou(4, 0.15, 0.0, 0.0, 1.0);
  det.x.setConstant(1.0);
  Rng rng(606);
  double worst_decay = 0.0;
  double expected = 1.0;
  for (int k = 0; k < 50; ++k) {
    expert::ou_next(det, rng);
    expected *= 0.85;
    worst_decay = std::max(worst_decay, std::abs(det.x[0] - expected) / expected);
  }
  auto ou = expert::make_ou(1, 0.15, 0.0, 0.2, 0.1);
  for (int k = 0; k < 1000; ++k) expert::ou_next(ou, rng);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    expert::ou_next(ou, rng);
    sum += ou.x[0];
    sq += ou.x[0] * ou.x[0];
  }
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  const double closed = 0.2 / std::sqrt(1.0 - 0.85 * 0.85);
  const double rel = std::abs(sd - closed) / closed;
  return {worst_decay < 1e-12 && rel < 0.1, "sigma=0 decay rel error " + fmt("%.1e", worst_decay) +
                                               "; stationary std " + fmt("%.4f", sd) + " vs AR(1) " +
                                               fmt("%.4f", closed) + " (" + fmt("%.1f", 100 * rel) + "% < 10%)"};
}

// --- 6: expert quality ---------------------------------------------------------

struct ExpertBundle {
  expert::ExpertTrainingResult training;
  double eval_ctr = 0.0;
  double random_ctr = 0.0;
  double seconds = 0.0;
};

constexpr std::uint64_t kExpertSeed = 1;
constexpr std::uint64_t kEvalSeed = 777;
constexpr int kEvalEpisodes = 500;

ExpertBundle& expert_bundle() {
  static ExpertBundle b = [] {
    ExpertBundle out;
    const auto settings = io::default_settings();
    const auto t0 = Clock::now();
    out.training = expert::train_expert(settings.env, settings.ddpg, settings.ddpg.episodes, kExpertSeed);
    out.seconds = seconds_since(t0);
    const auto& actor = out.training.nets.actor;
    const pipeline::ActionRule rule = [&actor](const env::EnvState&, const Vector& obs, Rng&) {
      return Vector(numeric::mlp_predict(actor, obs.transpose()).row(0).transpose());
    };
    out.eval_ctr = pipeline::evaluate_rule(rule, settings.env, kEvalEpisodes, kEvalSeed).mean_ctr;
    out.random_ctr = pipeline::evaluate_rule(pipeline::random_rule(), settings.env, kEvalEpisodes, kEvalSeed).mean_ctr;
    std::filesystem::create_directories(kOutDir);
    io::ArraySet set;
    io::append_ddpg(set, out.training.nets);
    io::save_checkpoint(kOutDir / "expert_ddpg.irlr", set);
    return out;
  }();
  return b;
}

Outcome criterion6() {
  const auto& b = expert_bundle();
  const bool pass = b.training.episodes_run <= 20000 && b.seconds < 1800.0 && b.eval_ctr >= 0.6 &&
                    b.eval_ctr >= 3.0 * b.random_ctr;
  return {pass, "expert CTR " + fmt("%.4f", b.eval_ctr) + " vs random " + fmt("%.4f", b.random_ctr) + " (ratio " +
                    fmt("%.2f", b.eval_ctr / b.random_ctr) + ") on " + std::to_string(kEvalEpisodes) +
                    " fresh episodes; " + std::to_string(b.training.episodes_run) + " DDPG episodes in " +
                    fmt("%.0f", b.seconds) + " s"};
}

// --- 7: end-to-end imitation ---------------------------------------------------

Outcome criterion7() {
  const auto& b = expert_bundle();
  auto settings = io::default_settings();
  const auto dataset =
      expert::collect_expert(b.training.nets.actor, settings.env, settings.run.expert_pairs, kExpertSeed + 100);
  settings.run.out_dir = (kOutDir / "e2e").string();
  const auto t0 = Clock::now();
  const auto run = pipeline::train_invrec(settings, dataset);
  const double t = seconds_since(t0);
  const auto& st = run.stats;
  double tail = 0.0;
  const std::size_t k = std::min<std::size_t>(20, st.size());
  for (std::size_t i = st.size() - k; i < st.size(); ++i) tail += st[i].ctr;
  tail /= static_cast<double>(k);
  const double js_first = run.occupancy_js.front();
  const double js_last = run.occupancy_js.back();
  const bool pass = st.size() == 200 && tail >= 0.8 * b.eval_ctr && tail >= 3.0 * b.random_ctr &&
                    js_last < js_first && t < 3600.0;
  return {pass, "final-20 learner CTR " + fmt("%.4f", tail) + " (need >= " + fmt("%.4f", 0.8 * b.eval_ctr) +
                    " = 0.8 x expert and >= " + fmt("%.4f", 3.0 * b.random_ctr) + " = 3 x random); JS it1 " +
                    fmt("%.4f", js_first) + " -> it200 " + fmt("%.4f", js_last) + "; " + fmt("%.0f", t) + " s"};
}

// --- 8: adaptive-KL ablation ---------------------------------------------------

Outcome criterion8() {
  const double up = optim::update_beta(1.0, 0.02, 0.01, 1.5, 2.0);
  const double down = optim::update_beta(1.0, 0.005, 0.01, 1.5, 2.0);
  auto settings = io::default_settings();
  settings.ppo.variant = optim::Variant::AdaptiveKl;
  settings.run.iterations = 50;
  settings.run.episodes_per_iteration = 20;
  settings.run.checkpoint_every = 0;
  const auto& b = expert_bundle();
  const auto dataset = expert::collect_expert(b.training.nets.actor, settings.env, 2000, kExpertSeed + 200);
  const auto run = pipeline::train_invrec(settings, dataset);
  bool finite = run.stats.size() == 50;
  for (const auto& s : run.stats)
    for (double v : {s.mean_env_reward, s.mean_bonus, s.ctr, s.disc_loss, s.policy_loss, s.value_loss, s.entropy,
                     s.approx_kl})
      finite = finite && std::isfinite(v);
  // beta starts at 1 and is only ever doubled or halved.
  const double exponent = std::log2(run.final_beta);
  const bool beta_ok = std::isfinite(exponent) && exponent == std::round(exponent);
  return {up == 2.0 && down == 0.5 && finite && beta_ok,
          "beta(d=0.02)=" + fmt("%g", up) + " beta(d=0.005)=" + fmt("%g", down) + "; 50-iteration run (20 episodes each) " +
              (finite ? "finite" : "NON-FINITE") + ", final beta " + fmt("%g", run.final_beta)};
}

// --- 9: grid harness -----------------------------------------------------------

Outcome criterion9() {
  auto settings = io::default_settings();
  settings.run.iterations = 3;
  settings.run.episodes_per_iteration = 10;
  settings.run.eval_episodes = 20;
  settings.run.checkpoint_every = 0;
  const auto& b = expert_bundle();
  const auto dataset = expert::collect_expert(b.training.nets.actor, settings.env, 2000, kExpertSeed + 300);
  const std::vector<double> lambdas{0.95, 0.97, 0.99};
  const std::vector<double> eps{0.1, 0.2, 0.3};
  const auto first = pipeline::format_grid(pipeline::run_grid(settings, dataset, lambdas, eps));
  const auto second = pipeline::format_grid(pipeline::run_grid(settings, dataset, lambdas, eps));
  io::write_text_file(kOutDir / "grid.csv", first);
  int rows = 0;
  std::istringstream in(first);
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line.rfind("gae_lambda", 0) != 0) ++rows;
  return {rows == 9 && first == second,
          std::to_string(rows) + " rows; repeated run " + (first == second ? "identical" : "DIFFERS")};
}

// --- 10: determinism and formats -----------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion10() {
  auto settings = io::default_settings();
  settings.run.iterations = 5;
  settings.run.episodes_per_iteration = 10;
  settings.run.hidden = 64;
  const auto& b = expert_bundle();
  const auto dataset = expert::collect_expert(b.training.nets.actor, settings.env, 1000, kExpertSeed + 400);
  settings.run.out_dir = (kOutDir / "det_a").string();
  pipeline::train_invrec(settings, dataset);
  settings.run.out_dir = (kOutDir / "det_b").string();
  pipeline::train_invrec(settings, dataset);
  const bool csv_same = slurp(kOutDir / "det_a" / "metrics.csv") == slurp(kOutDir / "det_b" / "metrics.csv") &&
                        !slurp(kOutDir / "det_a" / "metrics.csv").empty();

  const auto raw = slurp(kOutDir / "det_a" / "checkpoint.irlr");
  const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  const auto arrays = io::decode_checkpoint(bytes);
  const bool round_trip = io::encode_checkpoint(arrays) == bytes && raw == slurp(kOutDir / "det_b" / "checkpoint.irlr");
  std::size_t detected = 0;
  std::size_t flips = 0;
  for (std::size_t i = 0; i < bytes.size(); i += std::max<std::size_t>(1, bytes.size() / 997)) {
    auto bad = bytes;
    bad[i] ^= 0x10;
    ++flips;
    try {
      io::decode_checkpoint(bad);
    } catch (const Error&) {
      ++detected;
    }
  }
  return {csv_same && round_trip && detected == flips,
          std::string("metrics.csv ") + (csv_same ? "bit-identical" : "DIFFERS") + "; checkpoint re-encode " +
              (round_trip ? "bit-exact" : "DIFFERS") + "; " + std::to_string(detected) + "/" +
              std::to_string(flips) + " byte flips rejected"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient exactness", criterion1},      {"GAE oracle", criterion2},
      {"PPO clip arithmetic", criterion3},     {"discriminator separability", criterion4},
      {"OU statistics", criterion5},           {"expert quality", criterion6},
      {"end-to-end imitation", criterion7},    {"adaptive-KL ablation", criterion8},
      {"grid harness", criterion9},            {"determinism and formats", criterion10},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
