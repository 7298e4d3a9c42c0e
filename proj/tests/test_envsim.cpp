#include <cmath>
#include <vector>

#include "doctest.h"
#include "invrec/envsim.hpp"
#include "invrec/errors.hpp"

using namespace invrec;
using env::Vector;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector orthogonal_to(const Vector& h) {
  Vector v = Vector::Zero(h.size());
  v[0] = 1.0;
  v -= v.dot(h) * h;
  return v.normalized();
}

}  // namespace

TEST_SUITE("envsim") {
  TEST_CASE("encode_user lays out 11 one-hot blocks of width 8") {
    env::StaticAttrs zeros{};
    const Vector a = env::encode_user(zeros);
    CHECK(a.size() == 88);
    CHECK(a.sum() == 11.0);
    for (int k = 0; k < 11; ++k) CHECK(a[8 * k] == 1.0);

    env::StaticAttrs sevens;
    sevens.fill(7);
    const Vector b = env::encode_user(sevens);
    CHECK(b.sum() == 11.0);
    for (int k = 0; k < 11; ++k) CHECK(b[8 * k + 7] == 1.0);

    env::StaticAttrs mixed{0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2};
    CHECK(env::encode_user(mixed).sum() == 11.0);
  }

  TEST_CASE("encode_user rejects attributes outside 0..7") {
    env::StaticAttrs bad{};
    bad[3] = 8;
    CHECK_THROWS_AS(env::encode_user(bad), ValidationError);
    bad[3] = -1;
    CHECK_THROWS_AS(env::encode_user(bad), ValidationError);
  }

  TEST_CASE("config validation") {
    env::EnvConfig c;
    c.validate();
    c.max_steps = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.leave_prob = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.taste_share = 1.5;
    CHECK_THROWS_AS(env::Environment{c}, ConfigError);
  }

  TEST_CASE("reset is deterministic per seed and yields a 91-dim observation") {
    const env::Environment e(env::EnvConfig{});
    auto [s1, o1] = env::env_reset(e, 42);
    auto [s2, o2] = env::env_reset(e, 42);
    auto [s3, o3] = env::env_reset(e, 43);
    CHECK(o1.size() == 91);
    CHECK(o1 == o2);
    CHECK(o1 != o3);
    CHECK(o1.head(88).sum() == 11.0);
    CHECK(o1.tail(3).cwiseAbs().maxCoeff() <= 1.0);
    CHECK(s1.step_index == 0);
    CHECK_FALSE(s1.done);
    CHECK(std::abs(env::Diagnostics::hidden_pref(s1).norm() - 1.0) < 1e-12);
  }

  TEST_CASE("attribute categories are uniform over 1000 resets") {
    const env::Environment e(env::EnvConfig{});
    std::vector<std::vector<int>> counts(11, std::vector<int>(8, 0));
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
      auto [s, o] = env::env_reset(e, static_cast<std::uint64_t>(i));
      for (int k = 0; k < 11; ++k) counts[k][s.profile.static_attrs[k]] += 1;
    }
    const double mean = n / 8.0;
    const double sd = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
    for (const auto& attr : counts)
      for (int c : attr) CHECK(std::abs(c - mean) <= 3.0 * sd + 1e-9);
  }

  TEST_CASE("click model: oracle and orthogonal actions") {
    const env::Environment e(env::EnvConfig{});
    auto [s, o] = env::env_reset(e, 5);
    const Vector h = env::Diagnostics::oracle_action(s);
    CHECK(std::abs(h.norm() - 1.0) < 1e-12);
    CHECK(e.click_probability(h, h) == doctest::Approx(sigmoid(4.2)).epsilon(1e-12));
    CHECK(e.click_probability(h, h) == doctest::Approx(0.9852).epsilon(1e-4));
    CHECK(e.click_probability(h, orthogonal_to(h)) == doctest::Approx(sigmoid(-1.8)).epsilon(1e-12));
    CHECK(e.click_probability(h, orthogonal_to(h)) == doctest::Approx(0.1419).epsilon(1e-3));
  }

  TEST_CASE("click probability is scale invariant and monotone in alignment") {
    const env::Environment e(env::EnvConfig{});
    auto [s, o] = env::env_reset(e, 6);
    const Vector h = env::Diagnostics::hidden_pref(s);
    const Vector q = orthogonal_to(h);
    CHECK(e.click_probability(h, 0.3 * h) == doctest::Approx(e.click_probability(h, h)).epsilon(1e-12));
    double prev = -1.0;
    for (int k = 0; k <= 20; ++k) {
      const double t = -1.0 + 0.1 * k;  // cosine with h
      const Vector a = t * h + std::sqrt(1.0 - t * t) * q;
      const double p = e.click_probability(h, a);
      CHECK(p > prev);
      prev = p;
    }
  }

  TEST_CASE("step: rewards are integers in 0..10, episode length in [1, max_steps]") {
    env::EnvConfig c;
    c.max_steps = 12;
    const env::Environment e(c);
    Rng rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int ep = 0; ep < 200; ++ep) {
      auto [s, o] = env::env_reset(e, static_cast<std::uint64_t>(ep));
      int steps = 0;
      while (!s.done) {
        Vector a(27);
        for (auto& x : a) x = 3.0 * u(rng);  // exercises the box clip
        const auto r = env::env_step(e, s, a);
        CHECK(r.reward >= 0);
        CHECK(r.reward <= 10);
        CHECK(r.observation.size() == 91);
        CHECK(r.info.step_index == steps);
        ++steps;
      }
      CHECK(steps >= 1);
      CHECK(steps <= 12);
    }
  }

  TEST_CASE("step: two zero-click pages end the episode") {
    env::EnvConfig c;
    c.leave_prob = 0.0;
    c.click_bias = 50.0;  // p ~ 0: every page gets zero clicks
    const env::Environment e(c);
    auto [s, o] = env::env_reset(e, 9);
    const Vector a = Vector::Ones(27);
    auto r1 = env::env_step(e, s, a);
    CHECK(r1.reward == 0);
    CHECK_FALSE(r1.done);
    auto r2 = env::env_step(e, s, a);
    CHECK(r2.reward == 0);
    CHECK(r2.done);
    CHECK(s.step_index == 2);
  }

  TEST_CASE("step: the horizon ends the episode at max_steps") {
    env::EnvConfig c;
    c.leave_prob = 0.0;
    c.click_bias = -50.0;  // p ~ 1: never bored
    c.max_steps = 7;
    const env::Environment e(c);
    auto [s, o] = env::env_reset(e, 10);
    int steps = 0;
    while (!s.done) {
      env::env_step(e, s, Vector::Ones(27));
      ++steps;
    }
    CHECK(steps == 7);
  }

  TEST_CASE("step: interest stays in the box and the static code never changes") {
    const env::Environment e(env::EnvConfig{});
    auto [s, o] = env::env_reset(e, 11);
    Rng rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    while (!s.done) {
      Vector a(27);
      for (auto& x : a) x = n(rng);
      const auto r = env::env_step(e, s, a);
      CHECK(s.profile.interest.cwiseAbs().maxCoeff() <= 1.0);
      CHECK(r.observation.tail(3) == s.profile.interest);
      CHECK(r.observation.head(88) == o.head(88));  // static part never changes
    }
  }

  TEST_CASE("no drift keeps the interest and the preference fixed") {
    env::EnvConfig c;
    c.drift = 0.0;
    const env::Environment e(c);
    auto [s, o] = env::env_reset(e, 12);
    const Vector h0 = env::Diagnostics::hidden_pref(s);
    const Vector i0 = s.profile.interest;
    while (!s.done) env::env_step(e, s, Vector::Ones(27));
    CHECK(s.profile.interest == i0);
    CHECK((env::Diagnostics::hidden_pref(s) - h0).norm() < 1e-15);
  }

  TEST_CASE("full episode traces are reproducible bit for bit") {
    const env::Environment e(env::EnvConfig{});
    auto trace = [&](std::uint64_t seed) {
      std::vector<double> out;
      auto [s, o] = env::env_reset(e, seed);
      Rng rng(seed);
      std::normal_distribution<double> n(0.0, 1.0);
      while (!s.done) {
        Vector a(27);
        for (auto& x : a) x = n(rng);
        const auto r = env::env_step(e, s, a);
        out.push_back(r.reward);
        out.push_back(r.done);
        for (double v : r.observation) out.push_back(v);
      }
      return out;
    };
    CHECK(trace(77) == trace(77));
  }

  TEST_CASE("stepping a finished episode is a state error") {
    env::EnvConfig c;
    c.max_steps = 1;
    const env::Environment e(c);
    auto [s, o] = env::env_reset(e, 1);
    env::env_step(e, s, Vector::Ones(27));
    CHECK(s.done);
    CHECK_THROWS_AS(env::env_step(e, s, Vector::Ones(27)), StateError);
    CHECK_THROWS_AS(env::Diagnostics::oracle_action(s), StateError);
  }

  TEST_CASE("step rejects malformed actions") {
    const env::Environment e(env::EnvConfig{});
    auto [s, o] = env::env_reset(e, 1);
    CHECK_THROWS_AS(env::env_step(e, s, Vector::Ones(26)), ShapeError);
    Vector a = Vector::Ones(27);
    a[4] = std::nan("");
    CHECK_THROWS_AS(env::env_step(e, s, a), ValidationError);
  }

  TEST_CASE("oracle earns at least 9.5 clicks per page over 200 steps") {
    const env::Environment e(env::EnvConfig{});
    long clicks = 0;
    int steps = 0;
    for (std::uint64_t ep = 0; steps < 200; ++ep) {
      auto [s, o] = env::env_reset(e, 1000 + ep);
      while (!s.done && steps < 200) {
        clicks += env::env_step(e, s, env::Diagnostics::oracle_action(s)).reward;
        ++steps;
      }
    }
    CHECK(static_cast<double>(clicks) / steps >= 9.5);
  }

  TEST_CASE("the fixed matrices depend only on the environment seed") {
    env::EnvConfig c1, c2;
    c2.seed = c1.seed + 1;
    const env::Environment a(c1), b(c1), d(c2);
    auto [sa, oa] = env::env_reset(a, 3);
    auto [sb, ob] = env::env_reset(b, 3);
    auto [sd, od] = env::env_reset(d, 3);
    CHECK(oa == od);  // the user draw depends on the episode seed only
    CHECK(env::Diagnostics::hidden_pref(sa) == env::Diagnostics::hidden_pref(sb));
    CHECK(env::Diagnostics::hidden_pref(sa) != env::Diagnostics::hidden_pref(sd));
  }
}
