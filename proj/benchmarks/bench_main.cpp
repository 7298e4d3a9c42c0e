#include <benchmark/benchmark.h>

#include "invrec/discriminator.hpp"
#include "invrec/envsim.hpp"
#include "invrec/optim.hpp"
#include "invrec/policy.hpp"

using namespace invrec;
using numeric::Matrix;
using numeric::Vector;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Actor-sized MLP (91 -> 256 -> 256 -> 27), batch given by the argument.
void BM_MlpForward(benchmark::State& state) {
  Rng rng(1);
  const auto mlp = numeric::make_mlp({91, 256, 256, 27}, numeric::Head::Tanh, rng);
  const Matrix x = random_matrix(state.range(0), 91, rng);
  for (auto _ : state) benchmark::DoNotOptimize(numeric::mlp_predict(mlp, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(5)->Arg(64)->Arg(1024);

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto mlp = numeric::make_mlp({91, 256, 256, 27}, numeric::Head::Tanh, rng);
  const Matrix x = random_matrix(state.range(0), 91, rng);
  const Matrix g = random_matrix(state.range(0), 27, rng);
  for (auto _ : state) {
    auto fwd = numeric::mlp_forward(mlp, x);
    benchmark::DoNotOptimize(numeric::mlp_backward(mlp, fwd.cache, g));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(5)->Arg(64)->Arg(1024);

// One PPO minibatch (loss + exact gradients) at the default sizes.
void BM_PpoMinibatch(benchmark::State& state) {
  Rng rng(3);
  const auto actor = policy::make_actor(env::kObsDim, 256, env::kActionDim, rng);
  const auto critic = policy::make_critic(env::kObsDim, env::kActionDim, 256, policy::CriticInput::State, rng);
  const auto n = state.range(0);
  optim::Minibatch mb;
  mb.obs = random_matrix(n, env::kObsDim, rng);
  mb.means_old = numeric::mlp_predict(actor.mlp, mb.obs);
  mb.log_std_old = actor.log_std;
  mb.actions = mb.means_old + 0.5 * random_matrix(n, env::kActionDim, rng);
  mb.log_prob_old = policy::gaussian_log_prob(mb.means_old, mb.log_std_old, mb.actions);
  mb.advantages = random_matrix(n, 1, rng).col(0);
  mb.returns = random_matrix(n, 1, rng).col(0);
  const optim::PPOConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(optim::ppo_minibatch_loss(actor, critic, mb, cfg, 1.0));
}
BENCHMARK(BM_PpoMinibatch)->Arg(5)->Arg(64);

void BM_DiscriminatorUpdate(benchmark::State& state) {
  Rng rng(4);
  auto d = disc::make_discriminator(env::kObsDim, env::kActionDim, 128, rng);
  const auto n = state.range(0);
  const disc::Pairs l{random_matrix(n, env::kObsDim, rng), random_matrix(n, env::kActionDim, rng)};
  const disc::Pairs e{random_matrix(n, env::kObsDim, rng), random_matrix(n, env::kActionDim, rng)};
  numeric::AdamState adam;
  for (auto _ : state) benchmark::DoNotOptimize(disc::disc_update(d, adam, l, e, 1e-6));
  state.SetItemsProcessed(state.iterations() * 2 * n);
}
BENCHMARK(BM_DiscriminatorUpdate)->Arg(256)->Arg(2000);

void BM_EnvStep(benchmark::State& state) {
  const env::Environment e(env::EnvConfig{});
  Rng rng(5);
  const Vector a = random_matrix(env::kActionDim, 1, rng).col(0);
  std::uint64_t seed = 0;
  auto [s, o] = env::env_reset(e, seed);
  for (auto _ : state) {
    if (s.done) std::tie(s, o) = env::env_reset(e, ++seed);
    benchmark::DoNotOptimize(env::env_step(e, s, a));
  }
}
BENCHMARK(BM_EnvStep);

}  // namespace
BENCHMARK_MAIN();
