#pragma once

// Minimal dense network engine: ReLU multilayer perceptrons with exact
// reverse-mode gradients, Adam, and a central-difference gradient checker.
// Everything is double precision. Batches are row-major in the logical
// sense: one sample per row, so an input batch is batch x in.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "invrec/rng.hpp"

namespace invrec::numeric {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Head { Identity, Tanh, Sigmoid, Relu };

std::string to_string(Head head);

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out

  Eigen::Index in() const { return weights.cols(); }
  Eigen::Index out() const { return weights.rows(); }
};

// ReLU on every hidden layer, `head` on the last one.
struct MLPParams {
  std::vector<Layer> layers;
  Head head = Head::Identity;

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t parameter_count() const;

  // Weights then bias, layer by layer. The order is stable and shared by
  // every MLPParams with the same architecture.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  // Same architecture, all entries zero.
  MLPParams zeros_like() const;

  // Throws ShapeError on broken layer chaining, ValidationError on
  // non-finite entries.
  void validate() const;
  bool same_shape(const MLPParams& other) const;
};

// Gradients share the parameter layout.
using MLPGrads = MLPParams;

// widths = {in, hidden..., out}. Weights ~ U(-sqrt(6/(in+out)), +sqrt(6/(in+out))), biases 0.
MLPParams make_mlp(std::span<const Eigen::Index> widths, Head head, Rng& rng);
MLPParams make_mlp(std::initializer_list<Eigen::Index> widths, Head head, Rng& rng);

struct ForwardCache {
  std::vector<Matrix> inputs;          // inputs[k] feeds layer k; inputs[0] is the batch
  std::vector<Matrix> pre_activations;  // one per layer
  Matrix output;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

ForwardResult mlp_forward(const MLPParams& params, const Matrix& input);

// Output only; skips building the cache.
Matrix mlp_predict(const MLPParams& params, const Matrix& input);

struct BackwardResult {
  MLPGrads grads;
  Matrix grad_input;
};

// Exact derivatives of sum(grad_output .* output). Batch averaging is the
// caller's job: scale grad_output by 1/batch.
BackwardResult mlp_backward(const MLPParams& params, const ForwardCache& cache,
                            const Matrix& grad_output);

// Flat helpers over tensor lists.
std::size_t total_size(std::span<const std::span<double>> tensors);
std::size_t total_size(std::span<const std::span<const double>> tensors);
void axpy_tensors(double alpha, std::span<const std::span<const double>> x,
                  std::span<const std::span<double>> y);
bool all_finite(std::span<const std::span<const double>> tensors);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::size_t> sizes;  // per-tensor sizes, fixed on first step
  std::vector<double> m;
  std::vector<double> v;
};

// One Adam step with bias correction. Moments are sized on the first call.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, double lr);

void adam_step(AdamState& state, MLPParams& params, const MLPGrads& grads, double lr);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = false;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct FiniteDiffOptions {
  std::size_t probes = 16;
  double h = 1e-6;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  // Denominator floor for |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

// Perturbs randomly chosen coordinates of `params` in place (restoring them
// afterwards) and compares central differences of `loss` against `analytic`.
FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   const FiniteDiffOptions& options);

// Convenience overload for a loss over one network.
FiniteDiffReport finite_diff_check(const std::function<double(const MLPParams&)>& loss,
                                   MLPParams& params, const MLPGrads& analytic,
                                   const FiniteDiffOptions& options);

}  // namespace invrec::numeric
