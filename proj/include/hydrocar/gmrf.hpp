#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <cstdint>
#include <memory>
#include <optional>

#include "hydrocar/precision.hpp"
#include "hydrocar/rng.hpp"

namespace hydrocar {

using Vector = Eigen::VectorXd;

// Relative diagonal jitter applied to intrinsic precisions before factoring.
inline constexpr double kIntrinsicJitter = 1e-8;

// Sparse Cholesky factor P Q Pᵀ = L Lᵀ with an approximate minimum degree
// permutation P. Q here is the jittered matrix actually factored.
class CholeskyFactor {
 public:
  // Jitter of kIntrinsicJitter * mean(diag) when q is intrinsic, none otherwise.
  static CholeskyFactor factorize(const PrecisionMatrix& q);
  // Adds jitter_ratio * mean(diag(q)) to the diagonal before factoring.
  static CholeskyFactor factorize(const SparseMatrix& q, double jitter_ratio = 0.0);

  // Refactors a matrix with the same sparsity pattern, reusing the ordering.
  void refactorize(const SparseMatrix& q);

  std::size_t dim() const { return static_cast<std::size_t>(matrix_.rows()); }
  double jitter_applied() const { return jitter_; }
  // The matrix that was factored, jitter included.
  const SparseMatrix& factored_matrix() const { return matrix_; }

  // log det(Q) = 2 * sum(log L_ii).
  double log_determinant() const;
  Vector solve(const Vector& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // Returns Pᵀ L⁻ᵀ z, distributed N(0, Q⁻¹) when z is standard normal.
  Vector transform_standard_normal(const Vector& z) const;

  Eigen::MatrixXd lower_dense() const;
  Eigen::MatrixXd permutation_dense() const;

 private:
  using Solver = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  void factor_current();

  SparseMatrix matrix_;
  double jitter_ = 0.0;
  std::shared_ptr<Solver> solver_;
};

// Linear constraint A x = e; rows of A must be independent.
struct LinearConstraint {
  Eigen::MatrixXd a;
  Vector e;

  std::size_t rows() const { return static_cast<std::size_t>(a.rows()); }
  bool empty() const { return a.rows() == 0; }
};

// Sum-to-zero row per component of every intrinsic block in q. Rows are
// ordered by component label.
LinearConstraint sum_to_zero_constraints(const PrecisionMatrix& q);

// Conditioning correction for a Gaussian with precision Q under A x = e:
//   x* = x - Q⁻¹Aᵀ (A Q⁻¹ Aᵀ)⁻¹ (A x - e).
class ConstraintCorrection {
 public:
  ConstraintCorrection() = default;
  ConstraintCorrection(const CholeskyFactor& factor, const LinearConstraint& constraint);

  bool active() const { return rows_ > 0; }
  Vector apply(const Vector& x) const;
  // log det(A Q⁻¹ Aᵀ); zero when inactive.
  double log_det_gram() const { return log_det_gram_; }
  // Diagonal of Q⁻¹Aᵀ (A Q⁻¹ Aᵀ)⁻¹ A Q⁻¹, the variance removed by conditioning.
  Vector variance_reduction() const;
  // Same as variance_reduction() restricted to the given indices.
  double variance_reduction(std::size_t index) const;

 private:
  std::size_t rows_ = 0;
  Eigen::MatrixXd a_;
  Vector e_;
  Eigen::MatrixXd v_;  // Q⁻¹Aᵀ
  Eigen::LLT<Eigen::MatrixXd> gram_;
  double log_det_gram_ = 0.0;
};

// Gaussian log-density of x under N(mean, Q⁻¹) using the factored Q.
double log_density(const Vector& x, const Vector& mean, const CholeskyFactor& factor);

// One draw from N(0, Q⁻¹), conditioned on the constraint when given.
Vector sample(const CholeskyFactor& factor, const std::optional<LinearConstraint>& constraint,
              std::uint64_t seed);

// Streaming variant: draws consume `rng` in order.
Vector sample(const CholeskyFactor& factor, const ConstraintCorrection& correction, Rng& rng);

Vector solve(const CholeskyFactor& factor, const Vector& b);

}  // namespace hydrocar
