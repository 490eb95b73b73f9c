#include "hydrocar/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hydrocar/error.hpp"

namespace hydrocar {

namespace {

void check_dim(std::size_t expected, Eigen::Index actual, const char* what) {
  if (static_cast<Eigen::Index>(expected) != actual) {
    throw InputError(std::string(what) + ": dimension mismatch (expected " + std::to_string(expected) +
                     ", got " + std::to_string(actual) + ")");
  }
}

SparseMatrix add_diagonal(const SparseMatrix& q, double value) {
  SparseMatrix out = q;
  if (value != 0.0) {
    SparseMatrix d(q.rows(), q.cols());
    d.setIdentity();
    out += value * d;
  }
  out.makeCompressed();
  return out;
}

}  // namespace

CholeskyFactor CholeskyFactor::factorize(const PrecisionMatrix& q) {
  return factorize(q.matrix(), q.intrinsic() ? kIntrinsicJitter : 0.0);
}

CholeskyFactor CholeskyFactor::factorize(const SparseMatrix& q, double jitter_ratio) {
  if (q.rows() != q.cols()) throw InputError("factorize: matrix is not square");
  CholeskyFactor f;
  const double mean_diag = q.rows() > 0 ? q.diagonal().sum() / static_cast<double>(q.rows()) : 0.0;
  f.jitter_ = jitter_ratio * mean_diag;
  f.matrix_ = add_diagonal(q, f.jitter_);
  f.solver_ = std::make_shared<Solver>();
  f.solver_->analyzePattern(f.matrix_);
  f.factor_current();
  return f;
}

void CholeskyFactor::refactorize(const SparseMatrix& q) {
  check_dim(dim(), q.rows(), "refactorize");
  SparseMatrix next = add_diagonal(q, jitter_);
  const bool same_pattern = next.nonZeros() == matrix_.nonZeros() &&
                            std::equal(next.outerIndexPtr(), next.outerIndexPtr() + next.outerSize() + 1,
                                       matrix_.outerIndexPtr()) &&
                            std::equal(next.innerIndexPtr(), next.innerIndexPtr() + next.nonZeros(),
                                       matrix_.innerIndexPtr());
  matrix_ = std::move(next);
  // Copies of this factor may share the solver; only reuse it when unshared.
  if (!same_pattern || solver_.use_count() != 1) {
    solver_ = std::make_shared<Solver>();
    solver_->analyzePattern(matrix_);
  }
  factor_current();
}

void CholeskyFactor::factor_current() {
  if (matrix_.rows() == 0) return;
  solver_->factorize(matrix_);
  if (solver_->info() != Eigen::Success) {
    throw NumericalError("factorize: matrix is not positive definite (negative pivot beyond jitter)");
  }
}

double CholeskyFactor::log_determinant() const {
  if (dim() == 0) return 0.0;
  const SparseMatrix& l = solver_->matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

Vector CholeskyFactor::solve(const Vector& b) const {
  check_dim(dim(), b.size(), "solve");
  if (dim() == 0) return Vector();
  return solver_->solve(b);
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
  check_dim(dim(), b.rows(), "solve");
  if (dim() == 0) return Eigen::MatrixXd(0, b.cols());
  return solver_->solve(b);
}

Vector CholeskyFactor::transform_standard_normal(const Vector& z) const {
  check_dim(dim(), z.size(), "sample");
  if (dim() == 0) return Vector();
  Vector w = solver_->matrixU().solve(z);
  return solver_->permutationPinv() * w;
}

Eigen::MatrixXd CholeskyFactor::lower_dense() const {
  if (dim() == 0) return {};
  return Eigen::MatrixXd(SparseMatrix(solver_->matrixL()));
}

Eigen::MatrixXd CholeskyFactor::permutation_dense() const {
  if (dim() == 0) return {};
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
  return solver_->permutationP() * p;
}

LinearConstraint sum_to_zero_constraints(const PrecisionMatrix& q) {
  LinearConstraint c;
  const auto n = static_cast<Eigen::Index>(q.dim());
  if (!q.intrinsic()) {
    c.a.resize(0, n);
    c.e.resize(0);
    return c;
  }
  const int k = q.component_count();
  c.a = Eigen::MatrixXd::Zero(k, n);
  c.e = Vector::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) c.a(q.components()[static_cast<std::size_t>(i)], i) = 1.0;
  return c;
}

ConstraintCorrection::ConstraintCorrection(const CholeskyFactor& factor, const LinearConstraint& constraint)
    : rows_(constraint.rows()), a_(constraint.a), e_(constraint.e) {
  if (rows_ == 0) return;
  check_dim(factor.dim(), a_.cols(), "constraint");
  if (e_.size() == 0) e_ = Vector::Zero(static_cast<Eigen::Index>(rows_));
  v_ = factor.solve(Eigen::MatrixXd(a_.transpose()));
  const Eigen::MatrixXd gram = a_ * v_;
  gram_.compute(gram);
  if (gram_.info() != Eigen::Success) {
    throw NumericalError("constraint: A Q^-1 A^T is singular");
  }
  const Eigen::MatrixXd l = gram_.matrixL();
  log_det_gram_ = 2.0 * l.diagonal().array().log().sum();
  if (!std::isfinite(log_det_gram_)) throw NumericalError("constraint: A Q^-1 A^T is singular");
}

Vector ConstraintCorrection::apply(const Vector& x) const {
  if (rows_ == 0) return x;
  return x - v_ * gram_.solve(a_ * x - e_);
}

Vector ConstraintCorrection::variance_reduction() const {
  if (rows_ == 0) return {};
  const Eigen::MatrixXd w = gram_.solve(Eigen::MatrixXd(v_.transpose()));
  return (v_.array() * w.transpose().array()).rowwise().sum();
}

double ConstraintCorrection::variance_reduction(std::size_t index) const {
  if (rows_ == 0) return 0.0;
  const Vector row = v_.row(static_cast<Eigen::Index>(index)).transpose();
  return row.dot(gram_.solve(row));
}

double log_density(const Vector& x, const Vector& mean, const CholeskyFactor& factor) {
  check_dim(factor.dim(), x.size(), "log_density");
  check_dim(factor.dim(), mean.size(), "log_density");
  const Vector d = x - mean;
  const double quad = d.dot(factor.factored_matrix() * d);
  const double n = static_cast<double>(factor.dim());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * factor.log_determinant() - 0.5 * quad;
}

Vector sample(const CholeskyFactor& factor, const ConstraintCorrection& correction, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(static_cast<Eigen::Index>(factor.dim()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return correction.apply(factor.transform_standard_normal(z));
}

Vector sample(const CholeskyFactor& factor, const std::optional<LinearConstraint>& constraint,
              std::uint64_t seed) {
  Rng rng(seed);
  ConstraintCorrection correction;
  if (constraint && !constraint->empty()) correction = ConstraintCorrection(factor, *constraint);
  return sample(factor, correction, rng);
}

Vector solve(const CholeskyFactor& factor, const Vector& b) { return factor.solve(b); }

}  // namespace hydrocar
