#include "invrec/discriminator.hpp"

#include <cmath>

#include "invrec/errors.hpp"

namespace invrec::disc {

namespace {

void require_nonempty(const Pairs& p, const char* what) {
  if (p.size() == 0) throw ValidationError(std::string(what) + " batch is empty");
  if (p.actions.rows() != p.obs.rows()) throw ShapeError(std::string(what) + " obs/action row mismatch");
}

Vector clip_scores(const Vector& raw, double eps) { return raw.cwiseMax(eps).cwiseMin(1.0 - eps); }

}  // namespace

DiscParams make_discriminator(Eigen::Index obs_dim, Eigen::Index action_dim, Eigen::Index hidden,
                              Rng& rng) {
  DiscParams d;
  d.mlp = numeric::make_mlp({obs_dim + action_dim, hidden, hidden, 1}, numeric::Head::Sigmoid, rng);
  return d;
}

Matrix Pairs::joined() const {
  if (obs.rows() != actions.rows()) throw ShapeError("pairs: obs/action row mismatch");
  Matrix x(obs.rows(), obs.cols() + actions.cols());
  x << obs, actions;
  return x;
}

Vector disc_scores(const DiscParams& disc, const Pairs& pairs) {
  const Matrix raw = numeric::mlp_predict(disc.mlp, pairs.joined());
  return clip_scores(raw.col(0), disc.clip_eps);
}

double disc_score(const DiscParams& disc, const Vector& obs, const Vector& action) {
  Pairs p{obs.transpose(), action.transpose()};
  return disc_scores(disc, p)[0];
}

double disc_loss(const DiscParams& disc, const Pairs& learner, const Pairs& expert) {
  require_nonempty(learner, "learner");
  require_nonempty(expert, "expert");
  const Vector de = disc_scores(disc, expert);
  const Vector dl = disc_scores(disc, learner);
  return -(de.array().log().mean() + (1.0 - dl.array()).log().mean());
}

LossAndGrad disc_loss_and_grad(const DiscParams& disc, const Pairs& learner, const Pairs& expert) {
  require_nonempty(learner, "learner");
  require_nonempty(expert, "expert");
  const auto ne = expert.size();
  const auto nl = learner.size();
  Matrix x(ne + nl, expert.obs.cols() + expert.actions.cols());
  x << expert.joined(), learner.joined();
  auto fwd = numeric::mlp_forward(disc.mlp, x);
  const double lo = disc.clip_eps;
  const double hi = 1.0 - disc.clip_eps;

  // dL/dD per row; zero where the clip is active.
  Matrix grad_out(ne + nl, 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < ne + nl; ++i) {
    const double raw = fwd.output(i, 0);
    const double d = std::min(std::max(raw, lo), hi);
    const bool clipped = raw < lo || raw > hi;
    if (i < ne) {
      loss -= std::log(d) / static_cast<double>(ne);
      grad_out(i, 0) = clipped ? 0.0 : -1.0 / (d * static_cast<double>(ne));
    } else {
      loss -= std::log(1.0 - d) / static_cast<double>(nl);
      grad_out(i, 0) = clipped ? 0.0 : 1.0 / ((1.0 - d) * static_cast<double>(nl));
    }
  }
  auto back = numeric::mlp_backward(disc.mlp, fwd.cache, grad_out);
  return {loss, std::move(back.grads)};
}

UpdateResult disc_update(DiscParams& disc, numeric::AdamState& adam, const Pairs& learner,
                         const Pairs& expert, double lr) {
  auto lg = disc_loss_and_grad(disc, learner, expert);
  if (!std::isfinite(lg.loss)) throw NumericError("discriminator loss is not finite");
  numeric::adam_step(adam, disc.mlp, lg.grads, lr);
  return {lg.loss};
}

double bonus_reward(const DiscParams& disc, const Vector& obs, const Vector& action) {
  return std::log(disc_score(disc, obs, action));
}

Vector bonus_rewards(const DiscParams& disc, const Pairs& pairs) {
  return disc_scores(disc, pairs).array().log().matrix();
}

double accuracy(const DiscParams& disc, const Pairs& learner, const Pairs& expert) {
  const Vector de = disc_scores(disc, expert);
  const Vector dl = disc_scores(disc, learner);
  const auto correct = (de.array() > 0.5).count() + (dl.array() < 0.5).count();
  return static_cast<double>(correct) / static_cast<double>(de.size() + dl.size());
}

}  // namespace invrec::disc
