#pragma once

#include "mipdeco/linalg.hpp"

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mipdeco::fem {

using linalg::Matrix;
using linalg::SparseMatrix;
using linalg::Vector;

class FemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PdeKind { Poisson, ConvectionDiffusion, NonlinearPoisson };
enum class ElementType { P1Triangle, Q1Quad };

std::string to_string(PdeKind kind);
PdeKind pde_kind_from_string(const std::string& name);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Uniform structured mesh of the unit square.
///
/// Vertex (i, j) has index j * (cells + 1) + i and sits at (i h, j h).
/// Interior vertices are numbered in the same lexicographic order and form
/// the degrees of freedom after Dirichlet elimination.
struct Mesh2D {
  double h = 0.0;
  int cells_per_side = 0;
  ElementType element_type = ElementType::P1Triangle;
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 4>> quads;  // counter-clockwise from lower-left
  std::vector<int> boundary_vertices;
  std::vector<int> dof_of_vertex;  // -1 on the boundary
  std::vector<int> vertex_of_dof;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int interior_count() const { return static_cast<int>(vertex_of_dof.size()); }
};

/// Returns k for h = 2^-k; throws FemError if h is not dyadic.
int dyadic_level(double h);

/// Requires h = 2^-k with k >= 2.
Mesh2D build_mesh(double h, ElementType type = ElementType::P1Triangle);

/// Width omega such that a source with spacing d to its neighbour keeps the
/// given fraction of its centre value there: exp(-d^2/omega) = fraction.
double gaussian_width_from_neighbor_fraction(double spacing, double fraction);

/// m x m grid of Gaussian sources kappa * exp(-|x - c|^2 / omega) over
/// [lower, upper]^2. Centres are ordered with x varying fastest.
struct GaussianSourceGrid {
  int m = 10;
  double lower = 0.1;
  double upper = 0.9;
  double height = 100.0;
  double width = 0.0;

  int count() const { return m * m; }
  double spacing() const;
  std::vector<Point> centers() const;
};

/// Grid whose width follows the neighbour-fraction rule (5 % by default).
GaussianSourceGrid make_source_grid(int m, double lower = 0.1, double upper = 0.9,
                                    double height = 100.0, double neighbor_fraction = 0.05);

/// Nodal values of Gaussian sources at the interior vertices (one column per centre).
Matrix gaussian_nodal_values(const Mesh2D& mesh, std::span<const Point> centers, double height,
                             double width);

using WindField = std::function<Point(const Point&)>;
/// w(x) = (2 x2 (1 - x1^2), -2 x1 (1 - x2^2)).
Point default_wind(const Point& x);

/// Discretized PDE: M, K, Phi on interior DOFs plus cached factorizations.
/// Immutable after assembly.
struct FemSystem {
  PdeKind kind = PdeKind::Poisson;
  Mesh2D mesh;
  std::shared_ptr<const SparseMatrix> mass;
  std::shared_ptr<const SparseMatrix> stiffness;
  Matrix sources;       // Phi, n x l
  Matrix mass_sources;  // M Phi
  std::vector<Point> source_positions;  // centres or patch centres
  double adjacency_radius = 0.0;
  double source_height = 0.0;  // Gaussian only
  double source_width = 0.0;   // Gaussian only
  std::shared_ptr<const linalg::Factorization> mass_factor;
  std::shared_ptr<const linalg::Factorization> stiffness_factor;

  int state_dim() const { return static_cast<int>(mass->rows()); }
  int control_dim() const { return static_cast<int>(sources.cols()); }
};

/// P1 Poisson (or nonlinear Poisson) system with Gaussian sources on a grid.
FemSystem assemble_poisson(const Mesh2D& mesh, const GaussianSourceGrid& grid,
                           PdeKind kind = PdeKind::Poisson);

/// Same with explicit centres; adjacency_radius is used by the perturbation.
FemSystem assemble_poisson(const Mesh2D& mesh, std::span<const Point> centers, double height,
                           double width, double adjacency_radius,
                           PdeKind kind = PdeKind::Poisson);

/// Q1 + SUPG discretization of -Lap y + w.grad y with l = patches^2 square
/// patch indicators. Phi holds the L2-projection coefficients, so the
/// columns of M Phi are the (stabilized) patch load vectors.
FemSystem assemble_convection_diffusion(const Mesh2D& mesh, int patches_per_side,
                                        const WindField& wind = default_wind);

/// SUPG parameter tau = h/(2|w|) (coth(Pe) - 1/Pe) with Pe = |w| h / 2.
double supg_tau(double wind_norm, double h);

/// y = f(u). Linear kinds solve K y = M Phi u with the cached factorization;
/// the nonlinear kind runs Newton on F(y, u) = 0.
Vector solve_state(const FemSystem& system, const Vector& u);

/// Relative PDE residual ||F(y,u)|| / max(1, ||M Phi u||).
double state_residual(const FemSystem& system, const Vector& y, const Vector& u);

/// Integral of y_h^2 against every interior hat function.
Vector quadratic_load(const FemSystem& system, const Vector& y);
/// T(y)_ij = integral of y_h phi_i phi_j.
SparseMatrix quadratic_jacobian(const FemSystem& system, const Vector& y);

struct NonlinearEvaluation {
  Vector residual;             // F(y, u)
  SparseMatrix state_jacobian;  // F'_y
  Matrix control_jacobian;      // F'_u
};

/// F(y,u) = K y + int y_h^2 v_h - M Phi u, with F'_y = K + 2 T(y), F'_u = -M Phi.
NonlinearEvaluation nonlinear_residual_and_jacobian(const FemSystem& system, const Vector& y,
                                                    const Vector& u);

/// Nodal interpolation at interior vertices.
Vector interpolate(const Mesh2D& mesh, const std::function<double(const Point&)>& fn);

/// L2 distance between the P1 function with interior coefficients `y`
/// (zero on the boundary) and `exact`, by a degree-5 rule on every triangle.
double l2_error(const Mesh2D& mesh, const Vector& y,
                const std::function<double(const Point&)>& exact);

struct ManufacturedResult {
  double h = 0.0;
  double l2_error = 0.0;
};

/// Solves -Lap y = 2 pi^2 sin(pi x) sin(pi y) with P1 elements (load M f_h)
/// and measures the L2 error against the exact solution.
ManufacturedResult manufactured_poisson_error(double h);

}  // namespace mipdeco::fem
