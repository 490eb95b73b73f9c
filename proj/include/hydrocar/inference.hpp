#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hydrocar/gmrf.hpp"
#include "hydrocar/model.hpp"

namespace hydrocar {

// Log-precisions, one per latent effect in spec order.
using Hyperparameters = std::vector<double>;

struct NewtonOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 50;
  int max_halvings = 20;
};

// Gaussian approximation of p(x | y, θ) at its constrained mode.
struct GaussianApproximation {
  Vector mode;
  CholeskyFactor factor;  // Q* = Qprior(θ) + Aᵀ W A at the mode
  ConstraintCorrection correction;
  double log_likelihood = 0.0;       // log p(y | x*)
  double prior_quadratic = 0.0;      // x*ᵀ Qprior x*
  double log_det_posterior = 0.0;    // log det Q*
  double log_det_posterior_gram = 0.0;  // log det(C Q*⁻¹ Cᵀ)
  int iterations = 0;
  double gradient_norm = 0.0;        // max-norm of the projected gradient
  std::vector<double> objective_trace;  // log-posterior after each accepted step

  // Marginal variance of x[index] under the constrained Gaussian.
  double marginal_variance(std::size_t index) const;
};

// Unnormalized log p(x | y, θ) = loglik(y, A x) - ½ xᵀ Qprior x and its gradient.
struct LogPosterior {
  double value = 0.0;
  Vector gradient;
};
LogPosterior log_posterior(const LatentModel& model, const Hyperparameters& theta, const Vector& x);

GaussianApproximation gaussian_approximation(const LatentModel& model, const Hyperparameters& theta,
                                             const std::optional<Vector>& start = std::nullopt,
                                             const NewtonOptions& options = {});
GaussianApproximation gaussian_approximation(const Dataset& ds, const ModelSpec& spec,
                                             const Hyperparameters& theta);

// Laplace approximation of log p(y | θ) + log p(θ).
double laplace_objective(const LatentModel& model, const Hyperparameters& theta,
                         const GaussianApproximation& approx);

struct NelderMeadOptions {
  double objective_tolerance = 1e-4;
  int max_evaluations = 200;
  double initial_step = 1.0;
  double theta_bound = 20.0;  // |θ| beyond this is treated as infeasible
};

struct HyperparameterSearch {
  Hyperparameters theta;
  double objective = 0.0;
  int evaluations = 0;
};

HyperparameterSearch optimize_hyperparameters(const LatentModel& model, const NelderMeadOptions& options = {});
Hyperparameters optimize_hyperparameters(const Dataset& ds, const ModelSpec& spec);

struct DicSummary {
  double deviance_bar = 0.0;      // mean deviance over posterior draws
  double deviance_at_mean = 0.0;  // deviance at the mean draw
  double p_eff = 0.0;
  double dic = 0.0;
};

// Deviance D(x) = -2 loglik(y, A x), averaged over n_draws constrained
// draws x* + z, z ~ N(0, Q*⁻¹) conditioned on the constraint.
DicSummary compute_dic(const Vector& y, const SparseMatrix& design, const Vector& mode,
                       const CholeskyFactor& factor, const ConstraintCorrection& correction, int n_draws,
                       std::uint64_t seed);
DicSummary compute_dic(const LatentModel& model, const GaussianApproximation& approx, int n_draws,
                       std::uint64_t seed);

struct FixedEffectSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct FitResult {
  ModelSpec spec;
  std::size_t n_observations = 0;
  Hyperparameters theta_hat;
  Vector mode;
  GaussianApproximation posterior;
  double log_marginal_likelihood = 0.0;
  int hyper_evaluations = 0;
  DicSummary dic;
  std::vector<FixedEffectSummary> fixed_effects;
  AgeScaling age;
};

struct FitOptions {
  int n_draws = 1000;
};

FitResult fit(const Dataset& ds, const ModelSpec& spec, std::uint64_t seed, const FitOptions& options = {});

// Structured document with fields dic, p_eff, deviance_bar,
// deviance_at_mean, theta_hat, fixed_effects (plus descriptive extras).
std::string fit_result_json(const FitResult& fit);

}  // namespace hydrocar
