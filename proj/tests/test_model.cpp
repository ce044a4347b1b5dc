#include "mipdeco/model.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>

using namespace mipdeco;

namespace {

std::shared_ptr<const fem::FemSystem> grid_system(double h, int m) {
  return std::make_shared<const fem::FemSystem>(
      fem::assemble_poisson(fem::build_mesh(h), fem::make_source_grid(m)));
}

std::shared_ptr<const fem::FemSystem> random_center_system(int l, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.1, 0.9);
  std::vector<fem::Point> centers;
  for (int i = 0; i < l; ++i) centers.push_back({c(rng), c(rng)});
  const auto grid = fem::make_source_grid(3);
  return std::make_shared<const fem::FemSystem>(
      fem::assemble_poisson(fem::build_mesh(0.125), centers, grid.height, grid.width, 0.4));
}

Vector random_unit(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

// Random point of X: box sample scaled into the knapsack.
IterateX random_relaxed(const MipdecoProblem& p, std::mt19937_64& rng) {
  Vector u = random_unit(p.control_dim(), rng);
  if (u.sum() > p.budget) u *= p.budget / u.sum();
  return {fem::solve_state(*p.system, u), u};
}

// All binary controls with at most S ones.
std::vector<Vector> enumerate_w(int l, int S) {
  std::vector<Vector> out;
  for (unsigned mask = 0; mask < (1u << l); ++mask) {
    if (std::popcount(mask) > S) continue;
    Vector z = Vector::Zero(l);
    for (int i = 0; i < l; ++i)
      if (mask & (1u << i)) z(i) = 1.0;
    out.push_back(z);
  }
  return out;
}

}  // namespace

TEST(Problem, ValidatesInputs) {
  const auto sys = grid_system(0.125, 2);
  const Vector yd = Vector::Zero(sys->state_dim());
  EXPECT_NO_THROW(MipdecoProblem(sys, yd, 4));
  EXPECT_THROW(MipdecoProblem(sys, yd, 0), ModelError);
  EXPECT_THROW(MipdecoProblem(sys, yd, 5), ModelError);
  EXPECT_THROW(MipdecoProblem(sys, Vector::Zero(3), 1), ModelError);
  Vector bad = yd;
  bad(0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(MipdecoProblem(sys, bad, 1), ModelError);
  EXPECT_THROW(MipdecoProblem(nullptr, yd, 1), ModelError);
}

TEST(Objective, RawMatchesExpandedQuadraticForm) {
  const auto sys = grid_system(1.0 / 16, 4);
  std::mt19937_64 rng(1);
  const Vector yd = fem::solve_state(*sys, random_unit(16, rng));
  const MipdecoProblem p(sys, yd, 3);
  const Matrix m(*sys->mass);

  EXPECT_EQ(objective_raw(p, {yd, Vector::Zero(16)}), 0.0);
  EXPECT_NEAR(objective_raw(p, {Vector::Zero(yd.size()), Vector::Zero(16)}), 0.5 * yd.dot(m * yd),
              1e-14 * yd.dot(m * yd));
  for (int t = 0; t < 20; ++t) {
    const IterateX x = random_relaxed(p, rng);
    const double expanded = 0.5 * x.y.dot(m * x.y) - x.y.dot(m * yd) + 0.5 * yd.dot(m * yd);
    EXPECT_NEAR(objective_raw(p, x), expanded, 1e-10 * std::abs(expanded) + 1e-14);
  }
}

TEST(Objective, PenaltyTerm) {
  const auto sys = grid_system(1.0 / 16, 10);
  const MipdecoProblem p(sys, Vector::Ones(sys->state_dim()), 50);
  const IterateX half{Vector::Zero(sys->state_dim()), Vector::Constant(100, 0.5)};
  EXPECT_NEAR(objective_penalized(p, 1e5, half) - objective_raw(p, half), 2.5e-4, 1e-15);

  IterateX binary = half;
  binary.u.setZero();
  binary.u(3) = 1.0;
  for (double eps : {1e5, 1.0, 1e-3}) EXPECT_EQ(objective_penalized(p, eps, binary), objective_raw(p, binary));

  double previous = -1.0;
  for (double eps : {1e3, 1e1, 1e-1, 1e-3}) {
    const double value = objective_penalized(p, eps, half);
    EXPECT_GT(value, previous);
    previous = value;
  }
  EXPECT_THROW(objective_penalized(p, 0.0, half), ModelError);
  EXPECT_THROW(objective_penalized(p, -1.0, half), ModelError);
}

TEST(Objective, PenaltyBoundedOnRelaxedSet) {
  const auto sys = grid_system(0.125, 3);
  const MipdecoProblem p(sys, Vector::Zero(sys->state_dim()), 4);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const IterateX x = random_relaxed(p, rng);
    const double eps = std::pow(10.0, std::uniform_real_distribution<double>(-3, 5)(rng));
    const double gap = objective_penalized(p, eps, x) - objective_raw(p, x);
    EXPECT_GE(gap, 0.0);
    EXPECT_LE(gap, 9.0 / (4.0 * eps) * (1 + 1e-12));
  }
}

TEST(SmartRound, DocumentedExamples) {
  EXPECT_EQ(smart_round((Vector(3) << 0.8, 0.7, 0.1).finished(), 2), (Vector(3) << 1, 1, 0).finished());
  EXPECT_EQ(smart_round((Vector(3) << 0.63, 0.62, 0.61).finished(), 2), (Vector(3) << 1, 1, 0).finished());
  EXPECT_EQ(smart_round((Vector(3) << 1, 0, 0).finished(), 2), (Vector(3) << 1, 0, 0).finished());
}

TEST(SmartRound, TiesAndHalves) {
  EXPECT_EQ(smart_round((Vector(4) << 0.7, 0.9, 0.7, 0.7).finished(), 2), (Vector(4) << 1, 1, 0, 0).finished());
  EXPECT_EQ(smart_round((Vector(3) << 0.5, 0.2, 0.5).finished(), 1), (Vector(3) << 1, 0, 0).finished());
  EXPECT_EQ(smart_round((Vector(3) << 0.4, 0.49, 0.3).finished(), 3), Vector::Zero(3));
}

TEST(SmartRound, KnapsackAndIdempotenceProperty) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const int l = 1 + static_cast<int>(rng() % 12);
    const int S = 1 + static_cast<int>(rng() % l);
    const Vector r = smart_round(random_unit(l, rng), S);
    EXPECT_LE(r.sum(), S);
    EXPECT_TRUE((r.array() == 0.0 || r.array() == 1.0).all());
    EXPECT_EQ(smart_round(r, S), r);
  }
}

TEST(FeasibilityGap, Examples) {
  EXPECT_NEAR(feasibility_gap((Vector(3) << 0.95, 0.02, 0.03).finished(), 1), 0.05, 1e-15);
  EXPECT_NEAR(feasibility_gap((Vector(3) << 0.63, 0.62, 0.61).finished(), 2), 0.61, 1e-15);
  EXPECT_EQ(feasibility_gap((Vector(4) << 0, 1, 1, 0).finished(), 2), 0.0);
}

TEST(Lift, BinaryControlsLandInW) {
  const auto sys = grid_system(0.125, 3);
  const MipdecoProblem p(sys, Vector::Zero(sys->state_dim()), 2);
  const IterateX zero = lift_control(p, Vector::Zero(9));
  EXPECT_EQ(zero.y.norm(), 0.0);
  EXPECT_TRUE(in_binary_set(p, zero));
  for (const Vector& z : enumerate_w(9, 2)) {
    const IterateX x = lift_control(p, z);
    EXPECT_TRUE(in_binary_set(p, x));
    EXPECT_EQ(smart_round(x.u, 2), z);
  }
  EXPECT_THROW(lift_control(p, Vector::Zero(4)), ModelError);
}

TEST(Membership, RelaxedAndBinarySets) {
  const auto sys = grid_system(0.125, 2);
  const MipdecoProblem p(sys, Vector::Zero(sys->state_dim()), 2);
  const Vector u = (Vector(4) << 0.5, 0.5, 0.5, 0.5).finished();
  IterateX x{fem::solve_state(*sys, u), u};
  EXPECT_TRUE(in_relaxed_set(p, x));
  EXPECT_FALSE(in_binary_set(p, x));
  IterateX heavy{fem::solve_state(*sys, Vector::Constant(4, 0.6)), Vector::Constant(4, 0.6)};
  EXPECT_FALSE(in_relaxed_set(p, heavy));
  IterateX off = x;
  off.y(0) += 1e-3;
  EXPECT_FALSE(in_relaxed_set(p, off));
  IterateX outside = x;
  outside.u(0) = -0.1;
  EXPECT_FALSE(in_relaxed_set(p, outside));
}

TEST(ChebyshevBoxes, BetaIsSuperpositionBound) {
  const auto sys = grid_system(0.125, 3);
  const MipdecoProblem p(sys, Vector::Zero(sys->state_dim()), 2);
  const ChebyshevBoxes boxes = make_chebyshev_boxes(p);
  double max_single = 0.0;
  for (int i = 0; i < 9; ++i) {
    Vector e = Vector::Zero(9);
    e(i) = 1.0;
    max_single = std::max(max_single, fem::solve_state(*sys, e).cwiseAbs().maxCoeff());
  }
  EXPECT_NEAR(boxes.beta, 2.0 * max_single, 1e-12 * boxes.beta);
  EXPECT_EQ(boxes.rho, 0.4);
  for (const Vector& z : enumerate_w(9, 2)) {
    EXPECT_LE(fem::solve_state(*sys, z).cwiseAbs().maxCoeff(), boxes.beta * (1 + 1e-12));
  }
}

TEST(ChebyshevBoxes, DistanceClosedForm) {
  const ChebyshevBoxes boxes{0.4, 1.0};
  const IterateX scalar{Vector(), (Vector(1) << 0.7).finished()};
  EXPECT_NEAR(chebyshev_box_distance(scalar, Vector::Zero(1), boxes), 0.3, 1e-15);
  const IterateX inside{Vector::Constant(2, 0.5), (Vector(1) << 0.2).finished()};
  EXPECT_EQ(chebyshev_box_distance(inside, Vector::Zero(1), boxes), 0.0);
  const IterateX tall{(Vector(2) << 0.0, -1.5).finished(), (Vector(1) << 0.2).finished()};
  EXPECT_NEAR(chebyshev_box_distance(tall, Vector::Zero(1), boxes), 0.5, 1e-15);
}

TEST(ChebyshevBoxes, SmartRoundingMinimizesBoxDistance) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const int l = 2 + static_cast<int>(rng() % 7);
    const int S = 1 + static_cast<int>(rng() % std::min(3, l));
    const MipdecoProblem p(random_center_system(l, rng), Vector::Zero(49), S);
    const ChebyshevBoxes boxes = make_chebyshev_boxes(p);
    const IterateX x = random_relaxed(p, rng);
    double best = std::numeric_limits<double>::infinity();
    for (const Vector& z : enumerate_w(l, S)) best = std::min(best, chebyshev_box_distance(x, z, boxes));
    EXPECT_NEAR(chebyshev_box_distance(x, smart_round(x.u, S), boxes), best, 1e-12);
  }
}
