#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace mipdeco::linalg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

class LinearAlgebraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FactorKind { SymmetricPositiveDefinite, General };

/// Direct sparse factorization with forward and transposed solves.
///
/// Immutable once built; copies share the underlying factors, so one
/// factorization can serve many concurrent solves.
class Factorization {
 public:
  Factorization(const SparseMatrix& matrix, FactorKind kind);

  Vector solve(const Vector& rhs) const;
  Matrix solve(const Matrix& rhs) const;
  /// Solves A^T x = rhs with the same factors.
  Vector solve_transpose(const Vector& rhs) const;

  FactorKind kind() const { return kind_; }
  Eigen::Index size() const { return size_; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  FactorKind kind_;
  Eigen::Index size_;
};

/// Throws LinearAlgebraError on non-square input, a non-symmetric matrix
/// under the SPD kind, or numerical breakdown.
Factorization factorize(const SparseMatrix& matrix, FactorKind kind);

bool is_symmetric(const SparseMatrix& matrix, double rel_tol = 1e-12);

/// Saddle-point system [A B^T; B 0] of the interior-point Newton step.
///
/// Unknown ordering is (y, u, z, p, q) with y, p of size n = state_dim and
/// u of size l = control_dim. A = blockdiag(M, D_u, theta_z) and
/// B = [J_y, J_u, 0; 0, 1^T, 1], where J_y is K (or F'_y) and J_u is
/// -M Phi (or F'_u).
struct SaddleSystem {
  std::shared_ptr<const SparseMatrix> mass;
  std::shared_ptr<const SparseMatrix> state_jacobian;
  Matrix control_jacobian;
  Vector control_diagonal;
  double slack_diagonal = 1.0;
  Vector rhs;

  Eigen::Index state_dim() const { return mass->rows(); }
  Eigen::Index control_dim() const { return control_diagonal.size(); }
  Eigen::Index dimension() const { return 2 * state_dim() + control_dim() + 2; }

  Vector apply(const Vector& v) const;
  /// Primal rows of the product B v1 for v1 = (y, u, z).
  Vector apply_constraint(const Vector& primal) const;
  /// B^T w for w = (p, q).
  Vector apply_constraint_transpose(const Vector& dual) const;
};

/// Block lower-triangular preconditioner P = [A_hat 0; B -S_hat].
///
/// Built from block actions so it is usable outside the Newton system.
/// apply_inverse returns P^{-1} v; apply returns P v and needs the forward
/// block actions.
class BlockTriangularPreconditioner {
 public:
  using BlockAction = std::function<Vector(const Vector&)>;

  BlockTriangularPreconditioner(Eigen::Index primal_dim, Eigen::Index dual_dim,
                                BlockAction a_inverse, BlockAction b,
                                BlockAction s_inverse, BlockAction a = {},
                                BlockAction s = {});

  Vector apply_inverse(const Vector& v) const;
  Vector apply(const Vector& v) const;
  Vector operator()(const Vector& v) const { return apply_inverse(v); }

  Eigen::Index dimension() const { return primal_dim_ + dual_dim_; }

 private:
  Eigen::Index primal_dim_;
  Eigen::Index dual_dim_;
  BlockAction a_inverse_;
  BlockAction b_;
  BlockAction s_inverse_;
  BlockAction a_;
  BlockAction s_;
};

/// Preconditioner for a SaddleSystem: A_hat = A exactly and
/// S_hat = blockdiag(J_y M^{-1} J_y^T, 1), applied with the cached
/// factorizations of M and J_y.
BlockTriangularPreconditioner make_saddle_preconditioner(
    const SaddleSystem& system, const Factorization& mass_factor,
    const Factorization& state_factor);

}  // namespace mipdeco::linalg
