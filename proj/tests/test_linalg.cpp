#include "mipdeco/gmres.hpp"
#include "mipdeco/linalg.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mipdeco::linalg;

namespace {

SparseMatrix from_dense(const Matrix& d) { return d.sparseView(); }

SparseMatrix tridiag(int n) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0);
    if (i > 0) t.emplace_back(i, i - 1, -1.0);
    if (i + 1 < n) t.emplace_back(i, i + 1, -1.0);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

Matrix random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = g(rng);
  return r * r.transpose() + n * Matrix::Identity(n, n);
}

Matrix random_dense(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix r(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) r(i, j) = g(rng);
  return r;
}

}  // namespace

TEST(Factorization, TridiagonalSpdSolve) {
  const auto f = factorize(tridiag(4), FactorKind::SymmetricPositiveDefinite);
  const Vector x = f.solve(Vector(Vector::Ones(4)));
  const Vector expected = (Vector(4) << 2, 3, 3, 2).finished();
  EXPECT_LT((x - expected).norm(), 1e-12);
}

TEST(Factorization, TwoByTwoSolve) {
  Matrix a(2, 2);
  a << 4, 1, 1, 3;
  for (auto kind : {FactorKind::SymmetricPositiveDefinite, FactorKind::General}) {
    const Vector x = factorize(from_dense(a), kind).solve(Vector((Vector(2) << 1, 2).finished()));
    EXPECT_NEAR(x(0), 1.0 / 11.0, 1e-14);
    EXPECT_NEAR(x(1), 7.0 / 11.0, 1e-14);
  }
}

TEST(Factorization, GeneralAndTransposeMatchDense) {
  std::mt19937_64 rng(3);
  const Matrix a = random_dense(12, 12, rng) + 12 * Matrix::Identity(12, 12);
  const auto f = factorize(from_dense(a), FactorKind::General);
  const Vector b = random_dense(12, 1, rng);
  EXPECT_LT((f.solve(b) - a.partialPivLu().solve(b)).norm(), 1e-12);
  EXPECT_LT((f.solve_transpose(b) - a.transpose().partialPivLu().solve(b)).norm(), 1e-12);
  const Matrix rhs = random_dense(12, 3, rng);
  EXPECT_LT((a * f.solve(rhs) - rhs).norm(), 1e-11);
}

TEST(Factorization, RejectsBadInput) {
  SparseMatrix rect(3, 2);
  EXPECT_THROW(factorize(rect, FactorKind::General), LinearAlgebraError);
  Matrix ns(2, 2);
  ns << 2, 1, 0, 2;
  EXPECT_THROW(factorize(from_dense(ns), FactorKind::SymmetricPositiveDefinite), LinearAlgebraError);
  Matrix indefinite(2, 2);
  indefinite << 1, 0, 0, -1;
  EXPECT_THROW(factorize(from_dense(indefinite), FactorKind::SymmetricPositiveDefinite),
               LinearAlgebraError);
  Matrix singular = Matrix::Zero(2, 2);
  singular(0, 0) = 1.0;
  EXPECT_THROW(factorize(from_dense(singular), FactorKind::General), LinearAlgebraError);
}

TEST(Gmres, MatchesDirectSolveOnNonsymmetricSystem) {
  std::mt19937_64 rng(11);
  const Matrix a = random_dense(30, 30, rng) + 10 * Matrix::Identity(30, 30);
  const Vector b = random_dense(30, 1, rng);
  const auto res = gmres([&](const Vector& v) { return Vector(a * v); }, b, {1e-12, 100});
  ASSERT_TRUE(res.converged);
  EXPECT_LT((res.solution - a.partialPivLu().solve(b)).norm() / b.norm(), 1e-10);
  EXPECT_LE(res.relative_residual, 1e-11);
}

TEST(Gmres, ResidualHistoryIsNonIncreasing) {
  std::mt19937_64 rng(5);
  const Matrix a = random_dense(25, 25, rng) + 6 * Matrix::Identity(25, 25);
  const Vector b = random_dense(25, 1, rng);
  const auto res = gmres([&](const Vector& v) { return Vector(a * v); }, b, {1e-10, 100});
  for (size_t i = 1; i < res.residual_history.size(); ++i) {
    EXPECT_LE(res.residual_history[i], res.residual_history[i - 1] * (1.0 + 1e-8));
  }
}

TEST(Gmres, ExactPreconditionerConvergesInOneStep) {
  std::mt19937_64 rng(8);
  const Matrix a = random_dense(15, 15, rng) + 5 * Matrix::Identity(15, 15);
  const auto lu = a.partialPivLu();
  const Vector b = random_dense(15, 1, rng);
  const auto res = gmres([&](const Vector& v) { return Vector(a * v); }, b,
                         [&](const Vector& v) { return Vector(lu.solve(v)); }, {1e-10, 50});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
}

TEST(Gmres, ZeroRightHandSideAndBadTolerance) {
  const auto op = [](const Vector& v) { return v; };
  const auto res = gmres(op, Vector::Zero(4), {1e-6, 10});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_THROW(gmres(op, Vector::Ones(4), {0.0, 10}), std::invalid_argument);
  EXPECT_THROW(gmres(op, Vector::Ones(4), {1.0, 10}), std::invalid_argument);
}

// With A_hat = A and S_hat = B A^{-1} B^T the preconditioned saddle operator
// has minimal polynomial of degree two, so GMRES needs at most two steps.
TEST(BlockTriangularPreconditioner, ExactSchurComplementGivesTwoIterations) {
  std::mt19937_64 rng(21);
  const int np = 12, nd = 5;
  const Matrix a = random_spd(np, rng);
  const Matrix b = random_dense(nd, np, rng);
  const Matrix s = b * a.llt().solve(b.transpose());
  Matrix k = Matrix::Zero(np + nd, np + nd);
  k.topLeftCorner(np, np) = a;
  k.topRightCorner(np, nd) = b.transpose();
  k.bottomLeftCorner(nd, np) = b;

  const auto a_llt = a.llt();
  const auto s_llt = s.llt();
  BlockTriangularPreconditioner prec(
      np, nd, [&](const Vector& v) { return Vector(a_llt.solve(v)); },
      [&](const Vector& v) { return Vector(b * v); },
      [&](const Vector& v) { return Vector(s_llt.solve(v)); },
      [&](const Vector& v) { return Vector(a * v); }, [&](const Vector& v) { return Vector(s * v); });

  const Vector rhs = random_dense(np + nd, 1, rng);
  const auto res = gmres([&](const Vector& v) { return Vector(k * v); }, rhs, prec, {1e-10, 50});
  ASSERT_TRUE(res.converged);
  EXPECT_LE(res.iterations, 2);
  EXPECT_LT((k * res.solution - rhs).norm() / rhs.norm(), 1e-9);

  // P^{-1} P v = v
  for (int trial = 0; trial < 5; ++trial) {
    const Vector v = random_dense(np + nd, 1, rng);
    EXPECT_LT((prec.apply_inverse(prec.apply(v)) - v).norm(), 1e-10 * v.norm());
  }
}

TEST(SaddleSystem, ApplyMatchesAssembledDenseMatrix) {
  std::mt19937_64 rng(2);
  const int n = 6, l = 3;
  const Matrix m = random_spd(n, rng);
  const Matrix kk = random_dense(n, n, rng) + 6 * Matrix::Identity(n, n);
  SaddleSystem sys;
  sys.mass = std::make_shared<const SparseMatrix>(m.sparseView());
  sys.state_jacobian = std::make_shared<const SparseMatrix>(kk.sparseView());
  sys.control_jacobian = random_dense(n, l, rng);
  sys.control_diagonal = Vector::Constant(l, 0.5) + Vector::LinSpaced(l, 0.0, 1.0);
  sys.slack_diagonal = 0.7;

  const int dim = 2 * n + l + 2;
  Matrix dense = Matrix::Zero(dim, dim);
  dense.block(0, 0, n, n) = m;
  dense.block(n, n, l, l) = sys.control_diagonal.asDiagonal();
  dense(n + l, n + l) = sys.slack_diagonal;
  Matrix bmat = Matrix::Zero(n + 1, n + l + 1);
  bmat.block(0, 0, n, n) = kk;
  bmat.block(0, n, n, l) = sys.control_jacobian;
  bmat.block(n, n, 1, l).setOnes();
  bmat(n, n + l) = 1.0;
  dense.block(n + l + 1, 0, n + 1, n + l + 1) = bmat;
  dense.block(0, n + l + 1, n + l + 1, n + 1) = bmat.transpose();

  const Vector v = random_dense(dim, 1, rng);
  EXPECT_LT((sys.apply(v) - dense * v).norm(), 1e-12 * (dense * v).norm());

  const auto mf = factorize(*sys.mass, FactorKind::SymmetricPositiveDefinite);
  const auto kf = factorize(*sys.state_jacobian, FactorKind::General);
  const auto prec = make_saddle_preconditioner(sys, mf, kf);
  const Vector w = prec.apply_inverse(v);
  const Vector back = prec.apply(w);
  EXPECT_LT((back - v).norm(), 1e-9 * v.norm());
}

TEST(SaddleSystem, PreconditionerRejectsNonPositiveDiagonal) {
  SaddleSystem sys;
  sys.mass = std::make_shared<const SparseMatrix>(tridiag(3));
  sys.state_jacobian = sys.mass;
  sys.control_jacobian = Matrix::Ones(3, 1);
  sys.control_diagonal = Vector::Constant(1, -1.0);
  sys.slack_diagonal = 1.0;
  const auto f = factorize(*sys.mass, FactorKind::SymmetricPositiveDefinite);
  EXPECT_THROW(make_saddle_preconditioner(sys, f, f), LinearAlgebraError);
}

TEST(Factorization, IdentityReturnsRhs) {
  SparseMatrix eye(5, 5);
  eye.setIdentity();
  const Vector b = Vector::LinSpaced(5, -2.0, 2.0);
  EXPECT_EQ(factorize(eye, FactorKind::SymmetricPositiveDefinite).solve(b), b);
}

TEST(Factorization, RandomSpdSystemsProperty) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 200);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    std::vector<Triplet> t;
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::uniform_int_distribution<int> idx(0, n - 1);
    for (int k = 0; k < 3 * n; ++k) {
      const int i = idx(rng), j = idx(rng);
      const double v = val(rng);
      t.emplace_back(i, j, v);
      t.emplace_back(j, i, v);
    }
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, 6.0 * 2.0 + 1.0);
    SparseMatrix a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    a = SparseMatrix(a.transpose()) * a;
    const Vector b = random_dense(n, 1, rng);
    const Vector x = factorize(a, FactorKind::SymmetricPositiveDefinite).solve(b);
    ASSERT_LE((a * x - b).norm() / b.norm(), 1e-10) << "n=" << n;
  }
}

TEST(Gmres, IdentityOperatorConvergesInOneIteration) {
  const Vector b = Vector::LinSpaced(7, 1.0, 3.0);
  const auto res = gmres([](const Vector& v) { return v; }, b, {1e-8, 20});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_LT((res.solution - b).norm(), 1e-14);
}

TEST(BlockTriangularPreconditioner, TrivialBlocks) {
  const auto id = [](const Vector& v) { return v; };
  const auto zero = [](const Vector& v) { return Vector(Vector::Zero(v.size() == 3 ? 2 : 3)); };
  BlockTriangularPreconditioner prec(3, 2, id, zero, id, id, id);
  const Vector v = (Vector(5) << 1, 2, 3, 4, 5).finished();
  const Vector w = prec.apply_inverse(v);
  EXPECT_EQ(w, (Vector(5) << 1, 2, 3, -4, -5).finished());
  EXPECT_EQ(prec.apply_inverse(Vector::Zero(5)), Vector::Zero(5));
}
