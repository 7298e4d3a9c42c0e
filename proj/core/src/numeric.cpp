#include "invrec/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "invrec/errors.hpp"

namespace invrec::numeric {

namespace {

Matrix apply_head(Head head, const Matrix& z) {
  switch (head) {
    case Head::Identity:
      return z;
    case Head::Tanh:
      return z.array().tanh().matrix();
    case Head::Sigmoid:
      // Split by sign so exp never overflows.
      return z.unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
    case Head::Relu:
      return z.cwiseMax(0.0);
  }
  return z;
}

// d head(z) / dz expressed through z and y = head(z).
Matrix head_derivative(Head head, const Matrix& z, const Matrix& y) {
  switch (head) {
    case Head::Identity:
      return Matrix::Ones(z.rows(), z.cols());
    case Head::Tanh:
      return (1.0 - y.array().square()).matrix();
    case Head::Sigmoid:
      return (y.array() * (1.0 - y.array())).matrix();
    case Head::Relu:
      return (z.array() > 0.0).cast<double>().matrix();
  }
  return Matrix::Ones(z.rows(), z.cols());
}

void check_input(const MLPParams& params, const Matrix& input) {
  if (params.layers.empty()) throw ShapeError("mlp has no layers");
  if (input.cols() != params.in_dim()) {
    std::ostringstream os;
    os << "mlp input width " << input.cols() << " != " << params.in_dim();
    throw ShapeError(os.str());
  }
  if (!input.allFinite()) throw ValidationError("mlp input contains non-finite values");
}

}  // namespace

std::string to_string(Head head) {
  switch (head) {
    case Head::Identity:
      return "identity";
    case Head::Tanh:
      return "tanh";
    case Head::Sigmoid:
      return "sigmoid";
    case Head::Relu:
      return "relu";
  }
  return "unknown";
}

Eigen::Index MLPParams::in_dim() const { return layers.empty() ? 0 : layers.front().in(); }

Eigen::Index MLPParams::out_dim() const { return layers.empty() ? 0 : layers.back().out(); }

std::size_t MLPParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<std::span<double>> MLPParams::tensors() {
  std::vector<std::span<double>> out;
  out.reserve(layers.size() * 2);
  for (auto& l : layers) {
    out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::vector<std::span<const double>> MLPParams::tensors() const {
  std::vector<std::span<const double>> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

MLPParams MLPParams::zeros_like() const {
  MLPParams z;
  z.head = head;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Matrix::Zero(l.out(), l.in()), Vector::Zero(l.out())});
  }
  return z;
}

void MLPParams::validate() const {
  if (layers.empty()) throw ShapeError("mlp has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.size() != l.out()) throw ShapeError("bias length does not match layer output");
    if (k + 1 < layers.size() && layers[k + 1].in() != l.out()) {
      std::ostringstream os;
      os << "layer " << k << " output " << l.out() << " does not feed layer " << k + 1
         << " input " << layers[k + 1].in();
      throw ShapeError(os.str());
    }
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw ValidationError("mlp parameters contain non-finite values");
  }
}

bool MLPParams::same_shape(const MLPParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].weights.rows() != other.layers[k].weights.rows() ||
        layers[k].weights.cols() != other.layers[k].weights.cols() ||
        layers[k].bias.size() != other.layers[k].bias.size())
      return false;
  }
  return true;
}

MLPParams make_mlp(std::span<const Eigen::Index> widths, Head head, Rng& rng) {
  if (widths.size() < 2) throw ShapeError("mlp needs at least input and output widths");
  MLPParams p;
  p.head = head;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const auto in = widths[k];
    const auto out = widths[k + 1];
    if (in <= 0 || out <= 0) throw ShapeError("mlp widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(out, in), Vector::Zero(out)};
    // Fill in storage order so the draw sequence is independent of Eigen internals.
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MLPParams make_mlp(std::initializer_list<Eigen::Index> widths, Head head, Rng& rng) {
  std::vector<Eigen::Index> w(widths);
  return make_mlp(std::span<const Eigen::Index>(w), head, rng);
}

ForwardResult mlp_forward(const MLPParams& params, const Matrix& input) {
  check_input(params, input);
  ForwardResult r;
  auto& c = r.cache;
  const auto n = params.layers.size();
  c.inputs.reserve(n);
  c.pre_activations.reserve(n);
  c.inputs.push_back(input);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& l = params.layers[k];
    Matrix z = c.inputs[k] * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    c.pre_activations.push_back(std::move(z));
    if (k + 1 < n) c.inputs.push_back(c.pre_activations.back().cwiseMax(0.0));
  }
  c.output = apply_head(params.head, c.pre_activations.back());
  r.output = c.output;
  return r;
}

Matrix mlp_predict(const MLPParams& params, const Matrix& input) {
  check_input(params, input);
  Matrix x = input;
  const auto n = params.layers.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& l = params.layers[k];
    Matrix z = x * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    if (k + 1 < n)
      x = z.cwiseMax(0.0);
    else
      x = apply_head(params.head, z);
  }
  return x;
}

BackwardResult mlp_backward(const MLPParams& params, const ForwardCache& cache,
                            const Matrix& grad_output) {
  const auto n = params.layers.size();
  if (cache.pre_activations.size() != n || cache.inputs.size() != n)
    throw ShapeError("forward cache does not match network depth");
  if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols())
    throw ShapeError("grad_output shape does not match forward output");
  for (std::size_t k = 0; k < n; ++k) {
    if (cache.inputs[k].cols() != params.layers[k].in() ||
        cache.pre_activations[k].cols() != params.layers[k].out())
      throw ShapeError("forward cache does not match network parameters");
  }

  BackwardResult r;
  r.grads = params.zeros_like();
  Matrix delta = grad_output.cwiseProduct(
      head_derivative(params.head, cache.pre_activations.back(), cache.output));
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = params.layers[k];
    auto& g = r.grads.layers[k];
    g.weights.noalias() = delta.transpose() * cache.inputs[k];
    g.bias = delta.colwise().sum().transpose();
    Matrix grad_in = delta * l.weights;
    if (k == 0) {
      r.grad_input = std::move(grad_in);
    } else {
      delta = grad_in.cwiseProduct(
          (cache.pre_activations[k - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return r;
}

std::size_t total_size(std::span<const std::span<double>> tensors) {
  std::size_t n = 0;
  for (auto t : tensors) n += t.size();
  return n;
}

std::size_t total_size(std::span<const std::span<const double>> tensors) {
  std::size_t n = 0;
  for (auto t : tensors) n += t.size();
  return n;
}

void axpy_tensors(double alpha, std::span<const std::span<const double>> x,
                  std::span<const std::span<double>> y) {
  if (x.size() != y.size()) throw ShapeError("tensor lists differ in length");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != y[i].size()) throw ShapeError("tensor sizes differ");
    for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] += alpha * x[i][j];
  }
}

bool all_finite(std::span<const std::span<const double>> tensors) {
  for (auto t : tensors)
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, double lr) {
  if (lr < 0.0) throw ValidationError("adam learning rate must be non-negative");
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != grads[i].size()) throw ShapeError("adam: parameter/gradient size mismatch");

  if (state.sizes.empty()) {
    for (auto p : params) state.sizes.push_back(p.size());
    const auto n = total_size(params);
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  } else {
    if (state.sizes.size() != params.size()) throw ShapeError("adam: state layout mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (state.sizes[i] != params[i].size()) throw ShapeError("adam: state layout mismatch");
  }

  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    double* m = state.m.data() + offset;
    double* v = state.v.data() + offset;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    offset += p.size();
  }
}

void adam_step(AdamState& state, MLPParams& params, const MLPGrads& grads, double lr) {
  if (!params.same_shape(grads)) throw ShapeError("adam: gradient shape does not match parameters");
  auto p = params.tensors();
  auto g = grads.tensors();
  adam_step(state, p, g, lr);
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   const FiniteDiffOptions& options) {
  if (options.probes < 1) throw ValidationError("finite_diff_check needs at least one probe");
  if (!(options.h > 0.0)) throw ValidationError("finite_diff_check step must be positive");
  if (params.size() != analytic.size()) throw ShapeError("finite_diff_check: layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != analytic[i].size()) throw ShapeError("finite_diff_check: layout mismatch");
  const auto n = total_size(params);
  if (n == 0) throw ShapeError("finite_diff_check: no parameters");

  Rng rng(derive_seed(options.seed, {0xfdc}));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  FiniteDiffReport report;
  report.probes = options.probes;
  for (std::size_t probe = 0; probe < options.probes; ++probe) {
    std::size_t flat = pick(rng);
    std::size_t t = 0;
    std::size_t local = flat;
    while (local >= params[t].size()) {
      local -= params[t].size();
      ++t;
    }
    double& x = params[t][local];
    const double saved = x;
    x = saved + options.h;
    const double up = loss();
    x = saved - options.h;
    const double down = loss();
    x = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ValidationError("finite_diff_check: loss is not finite");
    const double numeric = (up - down) / (2.0 * options.h);
    const double a = analytic[t][local];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = flat;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

FiniteDiffReport finite_diff_check(const std::function<double(const MLPParams&)>& loss,
                                   MLPParams& params, const MLPGrads& analytic,
                                   const FiniteDiffOptions& options) {
  if (!params.same_shape(analytic)) throw ShapeError("finite_diff_check: gradient shape mismatch");
  auto p = params.tensors();
  auto g = analytic.tensors();
  return finite_diff_check([&] { return loss(params); }, p, g, options);
}

}  // namespace invrec::numeric
