#include "hydrocar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hydrocar/error.hpp"
#include "hydrocar/rng.hpp"
#include "json.hpp"

namespace hydrocar {

namespace {

// Euclidean projection onto the null space of the constraint rows.
class NullSpaceProjector {
 public:
  explicit NullSpaceProjector(const Eigen::MatrixXd& c) : c_(c) {
    if (c_.rows() > 0) gram_.compute(c_ * c_.transpose());
  }
  Vector operator()(const Vector& v) const {
    if (c_.rows() == 0) return v;
    return v - c_.transpose() * gram_.solve(c_ * v);
  }

 private:
  Eigen::MatrixXd c_;
  Eigen::LLT<Eigen::MatrixXd> gram_;
};

SparseMatrix posterior_precision(const SparseMatrix& prior, const SparseMatrix& design,
                                 const SparseMatrix& design_t, const Vector& weight) {
  SparseMatrix weighted = weight.asDiagonal() * design;
  SparseMatrix h = prior + SparseMatrix(design_t * weighted);
  h.makeCompressed();
  return h;
}

double objective_value(const LatentModel& model, const SparseMatrix& prior, const Vector& x) {
  const Vector eta = model.design() * x;
  return loglik_value(model.response(), eta) - 0.5 * x.dot(prior * x);
}

}  // namespace

double GaussianApproximation::marginal_variance(std::size_t index) const {
  Vector e = Vector::Zero(static_cast<Eigen::Index>(factor.dim()));
  e[static_cast<Eigen::Index>(index)] = 1.0;
  const double unconstrained = factor.solve(e)[static_cast<Eigen::Index>(index)];
  return unconstrained - correction.variance_reduction(index);
}

LogPosterior log_posterior(const LatentModel& model, const Hyperparameters& theta, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw InputError("log_posterior: dimension mismatch");
  const SparseMatrix prior = model.prior_precision(theta);
  const auto ll = loglik(model.response(), model.design() * x);
  const Vector qx = prior * x;
  LogPosterior out;
  out.value = ll.value - 0.5 * x.dot(qx);
  out.gradient = model.design().transpose() * ll.gradient - qx;
  return out;
}

GaussianApproximation gaussian_approximation(const LatentModel& model, const Hyperparameters& theta,
                                             const std::optional<Vector>& start, const NewtonOptions& options) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  const SparseMatrix prior = model.prior_precision(theta);
  const SparseMatrix design_t = model.design().transpose();
  const NullSpaceProjector project(model.constraint());
  LinearConstraint constraint{model.constraint(), Vector::Zero(model.constraint().rows())};

  Vector x = start && start->size() == n ? project(*start) : Vector::Zero(n);
  double value = objective_value(model, prior, x);

  GaussianApproximation out;
  std::optional<CholeskyFactor> factor;
  bool converged = false;
  double grad_norm = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter <= options.max_iterations; ++iter) {
    const auto ll = loglik(model.response(), model.design() * x);
    const Vector gradient = design_t * ll.gradient - prior * x;
    grad_norm = n > 0 ? project(gradient).cwiseAbs().maxCoeff() : 0.0;
    if (grad_norm < options.gradient_tolerance) {
      converged = true;
      break;
    }
    if (iter == options.max_iterations) break;

    const SparseMatrix h = posterior_precision(prior, model.design(), design_t, ll.weight);
    if (factor) {
      factor->refactorize(h);
    } else {
      factor = CholeskyFactor::factorize(h);
    }
    const ConstraintCorrection correction(*factor, constraint);
    const Vector step = project(correction.apply(factor->solve(gradient)));

    // Step halving: accept the first trial that does not decrease the
    // objective beyond rounding.
    const double slack = 1e-12 * (1.0 + std::abs(value));
    double t = 1.0;
    bool accepted = false;
    for (int h_count = 0; h_count <= options.max_halvings; ++h_count, t *= 0.5) {
      const Vector trial = x + t * step;
      const double trial_value = objective_value(model, prior, trial);
      if (std::isfinite(trial_value) && trial_value >= value - slack) {
        x = trial;
        value = trial_value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    out.objective_trace.push_back(value);
  }
  if (!converged) {
    throw NumericalError("Newton iteration did not converge after " + std::to_string(iter) +
                         " iterations (gradient norm " + std::to_string(grad_norm) + ")");
  }

  const auto ll = loglik(model.response(), model.design() * x);
  const SparseMatrix h = posterior_precision(prior, model.design(), design_t, ll.weight);
  if (factor) {
    factor->refactorize(h);
  } else {
    factor = CholeskyFactor::factorize(h);
  }
  out.mode = x;
  out.factor = std::move(*factor);
  out.correction = ConstraintCorrection(out.factor, constraint);
  out.log_likelihood = ll.value;
  out.prior_quadratic = x.dot(prior * x);
  out.log_det_posterior = out.factor.log_determinant();
  out.log_det_posterior_gram = out.correction.log_det_gram();
  out.iterations = iter;
  out.gradient_norm = grad_norm;
  return out;
}

GaussianApproximation gaussian_approximation(const Dataset& ds, const ModelSpec& spec,
                                             const Hyperparameters& theta) {
  return gaussian_approximation(LatentModel(ds, spec), theta);
}

double laplace_objective(const LatentModel& model, const Hyperparameters& theta,
                         const GaussianApproximation& approx) {
  return approx.log_likelihood - 0.5 * approx.prior_quadratic + 0.5 * model.prior_log_determinant(theta) +
         0.5 * model.prior_constraint_log_determinant(theta) - 0.5 * approx.log_det_posterior -
         0.5 * approx.log_det_posterior_gram + model.log_hyperprior(theta);
}

HyperparameterSearch optimize_hyperparameters(const LatentModel& model, const NelderMeadOptions& options) {
  HyperparameterSearch result;
  const std::size_t dim = model.hyper_dim();
  if (dim == 0) return result;

  const double inf = std::numeric_limits<double>::infinity();
  std::optional<Vector> warm;
  double best_seen = inf;
  // Minimizes the negative Laplace objective.
  auto evaluate = [&](const Hyperparameters& theta) {
    ++result.evaluations;
    for (double t : theta) {
      if (!std::isfinite(t) || std::abs(t) > options.theta_bound) return inf;
    }
    try {
      auto approx = gaussian_approximation(model, theta, warm);
      const double value = -laplace_objective(model, theta, approx);
      if (std::isnan(value)) return inf;
      if (value < best_seen) {
        best_seen = value;
        warm = approx.mode;
      }
      return value;
    } catch (const NumericalError&) {
      return inf;
    }
  };

  std::vector<Hyperparameters> simplex(dim + 1, Hyperparameters(dim, 0.0));
  for (std::size_t i = 0; i < dim; ++i) simplex[i + 1][i] += options.initial_step;
  std::vector<double> values;
  for (const auto& p : simplex) {
    values.push_back(evaluate(p));
    if (values.size() == 1 && !std::isfinite(values[0])) {
      throw NumericalError("hyperparameter objective is not finite at the starting point");
    }
  }

  auto combine = [](const Hyperparameters& a, const Hyperparameters& b, double t) {
    Hyperparameters out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  while (result.evaluations < options.max_evaluations) {
    std::vector<std::size_t> order(simplex.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<Hyperparameters> s2;
    std::vector<double> v2;
    for (auto i : order) {
      s2.push_back(simplex[i]);
      v2.push_back(values[i]);
    }
    simplex = std::move(s2);
    values = std::move(v2);
    if (std::isfinite(values.back()) && values.back() - values.front() < options.objective_tolerance) break;

    Hyperparameters centroid(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i][k] / static_cast<double>(dim);
    }
    const auto& worst = simplex.back();
    const auto reflected = combine(centroid, worst, -1.0);
    const double f_reflected = evaluate(reflected);
    if (f_reflected < values.front()) {
      const auto expanded = combine(centroid, worst, -2.0);
      const double f_expanded = evaluate(expanded);
      if (f_expanded < f_reflected) {
        simplex.back() = expanded;
        values.back() = f_expanded;
      } else {
        simplex.back() = reflected;
        values.back() = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[dim - 1]) {
      simplex.back() = reflected;
      values.back() = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values.back();
    const auto contracted = outside ? combine(centroid, reflected, 0.5) : combine(centroid, worst, 0.5);
    const double f_contracted = evaluate(contracted);
    if (f_contracted < std::min(f_reflected, values.back())) {
      simplex.back() = contracted;
      values.back() = f_contracted;
      continue;
    }
    for (std::size_t i = 1; i < simplex.size(); ++i) {
      simplex[i] = combine(simplex.front(), simplex[i], 0.5);
      values[i] = evaluate(simplex[i]);
    }
  }

  const auto best = std::min_element(values.begin(), values.end()) - values.begin();
  result.theta = simplex[static_cast<std::size_t>(best)];
  result.objective = -values[static_cast<std::size_t>(best)];
  return result;
}

Hyperparameters optimize_hyperparameters(const Dataset& ds, const ModelSpec& spec) {
  return optimize_hyperparameters(LatentModel(ds, spec)).theta;
}

DicSummary compute_dic(const Vector& y, const SparseMatrix& design, const Vector& mode,
                       const CholeskyFactor& factor, const ConstraintCorrection& correction, int n_draws,
                       std::uint64_t seed) {
  if (n_draws < 2) throw InputError("compute_dic: need at least 2 draws");
  if (design.cols() != mode.size() || design.rows() != y.size()) {
    throw InputError("compute_dic: dimension mismatch");
  }
  Rng rng(seed);
  // Deviances are summed relative to the first draw to keep the mean exact
  // when they barely vary.
  double first = 0.0, shifted_sum = 0.0;
  Vector x_sum = Vector::Zero(mode.size());
  for (int s = 0; s < n_draws; ++s) {
    const Vector x = mode + sample(factor, correction, rng);
    const double deviance = -2.0 * loglik_value(y, design * x);
    if (s == 0) first = deviance;
    shifted_sum += deviance - first;
    x_sum += x;
  }
  DicSummary d;
  d.deviance_bar = first + shifted_sum / n_draws;
  const Vector x_mean = x_sum / n_draws;
  d.deviance_at_mean = -2.0 * loglik_value(y, design * x_mean);
  d.p_eff = d.deviance_bar - d.deviance_at_mean;
  d.dic = d.deviance_at_mean + 2.0 * d.p_eff;
  return d;
}

DicSummary compute_dic(const LatentModel& model, const GaussianApproximation& approx, int n_draws,
                       std::uint64_t seed) {
  return compute_dic(model.response(), model.design(), approx.mode, approx.factor, approx.correction, n_draws,
                     seed);
}

FitResult fit(const Dataset& ds, const ModelSpec& spec, std::uint64_t seed, const FitOptions& options) {
  const Dataset complete = ds.complete_cases(spec.required_variables());
  if (complete.size() == 0) throw InputError("no complete cases for model '" + spec.label() + "'");
  const LatentModel model(complete, spec);

  FitResult result;
  result.spec = spec;
  result.n_observations = complete.size();
  result.age = model.age();
  const auto search = optimize_hyperparameters(model);
  result.theta_hat = search.theta;
  result.hyper_evaluations = search.evaluations;
  result.posterior = gaussian_approximation(model, result.theta_hat);
  result.mode = result.posterior.mode;
  result.log_marginal_likelihood =
      laplace_objective(model, result.theta_hat, result.posterior) - model.log_hyperprior(result.theta_hat);
  result.dic = compute_dic(model, result.posterior, options.n_draws, derive_seed(seed, 0));

  for (std::size_t k = 0; k < spec.fixed.size(); ++k) {
    FixedEffectSummary s;
    s.name = spec.fixed[k] == FixedEffect::Intercept ? "intercept" : spec.fixed[k] == FixedEffect::Age ? "age" : "gender";
    s.mean = result.mode[static_cast<Eigen::Index>(k)];
    s.sd = std::sqrt(std::max(0.0, result.posterior.marginal_variance(k)));
    result.fixed_effects.push_back(s);
  }
  return result;
}

std::string fit_result_json(const FitResult& fit) {
  nlohmann::ordered_json doc;
  doc["model"] = fit.spec.label();
  doc["spec"] = fit.spec.tokens();
  doc["n_observations"] = fit.n_observations;
  doc["dic"] = fit.dic.dic;
  doc["p_eff"] = fit.dic.p_eff;
  doc["deviance_bar"] = fit.dic.deviance_bar;
  doc["deviance_at_mean"] = fit.dic.deviance_at_mean;
  nlohmann::ordered_json theta = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < fit.spec.latent.size(); ++k) {
    theta[effect_label(fit.spec.latent[k])] = {{"log_precision", fit.theta_hat[k]},
                                               {"precision", std::exp(fit.theta_hat[k])}};
  }
  doc["theta_hat"] = theta;
  nlohmann::ordered_json fixed = nlohmann::ordered_json::array();
  for (const auto& f : fit.fixed_effects) fixed.push_back({{"name", f.name}, {"mean", f.mean}, {"sd", f.sd}});
  doc["fixed_effects"] = fixed;
  doc["age_scaling"] = {{"mean", fit.age.mean}, {"sd", fit.age.sd}};
  doc["log_marginal_likelihood"] = fit.log_marginal_likelihood;
  doc["newton_iterations"] = fit.posterior.iterations;
  doc["hyperparameter_evaluations"] = fit.hyper_evaluations;
  return doc.dump(2) + "\n";
}

}  // namespace hydrocar
