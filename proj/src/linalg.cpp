#include "mipdeco/linalg.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <optional>
#include <utility>

namespace mipdeco::linalg {

struct Factorization::Impl {
  std::optional<Eigen::SimplicialLLT<SparseMatrix>> llt;
  // SparseLU::transpose() is non-const although solving through the view
  // does not modify the factors.
  mutable std::optional<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu;
};

bool is_symmetric(const SparseMatrix& matrix, double rel_tol) {
  if (matrix.rows() != matrix.cols()) return false;
  const SparseMatrix diff = SparseMatrix(matrix.transpose()) - matrix;
  const double scale = std::max(matrix.norm(), 1e-300);
  return diff.norm() <= rel_tol * scale;
}

Factorization::Factorization(const SparseMatrix& matrix, FactorKind kind)
    : kind_(kind), size_(matrix.rows()) {
  if (matrix.rows() != matrix.cols()) {
    throw LinearAlgebraError("factorize: matrix is not square");
  }
  auto impl = std::make_shared<Impl>();
  if (kind == FactorKind::SymmetricPositiveDefinite) {
    if (!is_symmetric(matrix)) {
      throw LinearAlgebraError("factorize: SPD kind requested for a non-symmetric matrix");
    }
    impl->llt.emplace(matrix);
    if (impl->llt->info() != Eigen::Success) {
      throw LinearAlgebraError("factorize: Cholesky breakdown, matrix is not positive definite");
    }
  } else {
    impl->lu.emplace();
    SparseMatrix compressed = matrix;
    compressed.makeCompressed();
    impl->lu->analyzePattern(compressed);
    impl->lu->factorize(compressed);
    if (impl->lu->info() != Eigen::Success) {
      throw LinearAlgebraError("factorize: LU breakdown (" + impl->lu->lastErrorMessage() + ")");
    }
  }
  impl_ = std::move(impl);
}

Vector Factorization::solve(const Vector& rhs) const {
  if (rhs.size() != size_) throw LinearAlgebraError("solve: dimension mismatch");
  if (impl_->llt) return impl_->llt->solve(rhs);
  return impl_->lu->solve(rhs);
}

Matrix Factorization::solve(const Matrix& rhs) const {
  if (rhs.rows() != size_) throw LinearAlgebraError("solve: dimension mismatch");
  if (impl_->llt) return impl_->llt->solve(rhs);
  return impl_->lu->solve(rhs);
}

Vector Factorization::solve_transpose(const Vector& rhs) const {
  if (rhs.size() != size_) throw LinearAlgebraError("solve_transpose: dimension mismatch");
  if (impl_->llt) return impl_->llt->solve(rhs);
  return impl_->lu->transpose().solve(rhs);
}

Factorization factorize(const SparseMatrix& matrix, FactorKind kind) {
  return Factorization(matrix, kind);
}

// ---------------------------------------------------------------------------

Vector SaddleSystem::apply_constraint(const Vector& primal) const {
  const Eigen::Index n = state_dim();
  const Eigen::Index l = control_dim();
  Vector out(n + 1);
  out.head(n) = (*state_jacobian) * primal.head(n) + control_jacobian * primal.segment(n, l);
  out(n) = primal.segment(n, l).sum() + primal(n + l);
  return out;
}

Vector SaddleSystem::apply_constraint_transpose(const Vector& dual) const {
  const Eigen::Index n = state_dim();
  const Eigen::Index l = control_dim();
  Vector out(n + l + 1);
  out.head(n) = state_jacobian->transpose() * dual.head(n);
  out.segment(n, l) = control_jacobian.transpose() * dual.head(n);
  out.segment(n, l).array() += dual(n);
  out(n + l) = dual(n);
  return out;
}

Vector SaddleSystem::apply(const Vector& v) const {
  const Eigen::Index n = state_dim();
  const Eigen::Index l = control_dim();
  const Eigen::Index primal_dim = n + l + 1;
  if (v.size() != dimension()) throw LinearAlgebraError("SaddleSystem::apply: dimension mismatch");

  const auto primal = v.head(primal_dim);
  const auto dual = v.tail(n + 1);
  Vector out(dimension());
  out.head(primal_dim) = apply_constraint_transpose(dual);
  out.head(n) += (*mass) * primal.head(n);
  out.segment(n, l) += control_diagonal.cwiseProduct(primal.segment(n, l));
  out(n + l) += slack_diagonal * primal(n + l);
  out.tail(n + 1) = apply_constraint(primal);
  return out;
}

// ---------------------------------------------------------------------------

BlockTriangularPreconditioner::BlockTriangularPreconditioner(
    Eigen::Index primal_dim, Eigen::Index dual_dim, BlockAction a_inverse, BlockAction b,
    BlockAction s_inverse, BlockAction a, BlockAction s)
    : primal_dim_(primal_dim),
      dual_dim_(dual_dim),
      a_inverse_(std::move(a_inverse)),
      b_(std::move(b)),
      s_inverse_(std::move(s_inverse)),
      a_(std::move(a)),
      s_(std::move(s)) {}

Vector BlockTriangularPreconditioner::apply_inverse(const Vector& v) const {
  if (v.size() != dimension()) {
    throw LinearAlgebraError("preconditioner: dimension mismatch");
  }
  Vector out(dimension());
  const Vector w1 = a_inverse_(v.head(primal_dim_));
  out.head(primal_dim_) = w1;
  // B w1 - S_hat w2 = v2  =>  w2 = S_hat^{-1} (B w1 - v2)
  out.tail(dual_dim_) = s_inverse_(b_(w1) - v.tail(dual_dim_));
  return out;
}

Vector BlockTriangularPreconditioner::apply(const Vector& v) const {
  if (!a_ || !s_) throw LinearAlgebraError("preconditioner: forward blocks not provided");
  if (v.size() != dimension()) throw LinearAlgebraError("preconditioner: dimension mismatch");
  Vector out(dimension());
  const Vector v1 = v.head(primal_dim_);
  out.head(primal_dim_) = a_(v1);
  out.tail(dual_dim_) = b_(v1) - s_(v.tail(dual_dim_));
  return out;
}

BlockTriangularPreconditioner make_saddle_preconditioner(const SaddleSystem& system,
                                                         const Factorization& mass_factor,
                                                         const Factorization& state_factor) {
  const Eigen::Index n = system.state_dim();
  const Eigen::Index l = system.control_dim();
  if (mass_factor.size() != n || state_factor.size() != n) {
    throw LinearAlgebraError("make_saddle_preconditioner: factorization size mismatch");
  }
  const auto mass = system.mass;
  const auto jac = system.state_jacobian;
  const Vector diag_u = system.control_diagonal;
  const double theta_z = system.slack_diagonal;
  if ((diag_u.array() <= 0.0).any() || !(theta_z > 0.0)) {
    throw LinearAlgebraError("make_saddle_preconditioner: A block is not positive definite");
  }
  auto saddle = std::make_shared<const SaddleSystem>(system);

  auto a_inverse = [=](const Vector& r) {
    Vector w(n + l + 1);
    w.head(n) = mass_factor.solve(Vector(r.head(n)));
    w.segment(n, l) = r.segment(n, l).cwiseQuotient(diag_u);
    w(n + l) = r(n + l) / theta_z;
    return w;
  };
  auto a_forward = [=](const Vector& r) {
    Vector w(n + l + 1);
    w.head(n) = (*mass) * r.head(n);
    w.segment(n, l) = r.segment(n, l).cwiseProduct(diag_u);
    w(n + l) = r(n + l) * theta_z;
    return w;
  };
  auto b = [saddle](const Vector& primal) { return saddle->apply_constraint(primal); };
  // (J M^{-1} J^T)^{-1} = J^{-T} M J^{-1}
  auto s_inverse = [=](const Vector& r) {
    Vector w(n + 1);
    const Vector t = state_factor.solve(Vector(r.head(n)));
    w.head(n) = state_factor.solve_transpose((*mass) * t);
    w(n) = r(n);
    return w;
  };
  auto s_forward = [=](const Vector& r) {
    Vector w(n + 1);
    const Vector t = mass_factor.solve(Vector(jac->transpose() * r.head(n)));
    w.head(n) = (*jac) * t;
    w(n) = r(n);
    return w;
  };
  return BlockTriangularPreconditioner(n + l + 1, n + 1, a_inverse, b, s_inverse, a_forward,
                                       s_forward);
}

}  // namespace mipdeco::linalg
