#include "mipdeco/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mipdeco::fem {

namespace {

constexpr double kAdjacencySlack = 1.0 + 1e-9;

double triangle_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

// Gradients of the barycentric coordinates of a triangle.
std::array<Point, 3> barycentric_gradients(const Point& a, const Point& b, const Point& c,
                                           double area) {
  const double s = 1.0 / (2.0 * area);
  return {Point{(b.y - c.y) * s, (c.x - b.x) * s}, Point{(c.y - a.y) * s, (a.x - c.x) * s},
          Point{(a.y - b.y) * s, (b.x - a.x) * s}};
}

// Integral of lambda_a lambda_b lambda_c over a triangle of the given area.
double triple_integral(int a, int b, int c, double area) {
  if (a == b && b == c) return area / 10.0;
  if (a == b || b == c || a == c) return area / 30.0;
  return area / 60.0;
}

// Degree-5, 7-point rule on the reference triangle (barycentric, weights sum to 1).
struct BaryRule {
  std::array<double, 3> lambda;
  double weight;
};

const std::vector<BaryRule>& dunavant5() {
  static const std::vector<BaryRule> rule = [] {
    const double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
    const double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
    return std::vector<BaryRule>{
        {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0.225},
        {{a1, b1, b1}, w1}, {{b1, a1, b1}, w1}, {{b1, b1, a1}, w1},
        {{a2, b2, b2}, w2}, {{b2, a2, b2}, w2}, {{b2, b2, a2}, w2},
    };
  }();
  return rule;
}

const std::array<double, 3> kGaussPoints{-0.7745966692414834, 0.0, 0.7745966692414834};
const std::array<double, 3> kGaussWeights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
const std::array<std::array<double, 2>, 4> kQuadCorners{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};

SparseMatrix to_sparse(int n, const std::vector<linalg::Triplet>& entries) {
  SparseMatrix m(n, n);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

void finalize_factorizations(FemSystem& system, linalg::FactorKind stiffness_kind) {
  system.mass_factor = std::make_shared<const linalg::Factorization>(
      *system.mass, linalg::FactorKind::SymmetricPositiveDefinite);
  system.stiffness_factor =
      std::make_shared<const linalg::Factorization>(*system.stiffness, stiffness_kind);
}

void check_control(const FemSystem& system, const Vector& u) {
  if (u.size() != system.control_dim()) {
    throw FemError("control dimension " + std::to_string(u.size()) + " does not match l = " +
                   std::to_string(system.control_dim()));
  }
}

}  // namespace

std::string to_string(PdeKind kind) {
  switch (kind) {
    case PdeKind::Poisson:
      return "poisson";
    case PdeKind::ConvectionDiffusion:
      return "convection-diffusion";
    case PdeKind::NonlinearPoisson:
      return "nonlinear-poisson";
  }
  return "unknown";
}

PdeKind pde_kind_from_string(const std::string& name) {
  if (name == "poisson") return PdeKind::Poisson;
  if (name == "convection-diffusion") return PdeKind::ConvectionDiffusion;
  if (name == "nonlinear-poisson") return PdeKind::NonlinearPoisson;
  throw FemError("unknown PDE kind '" + name + "'");
}

int dyadic_level(double h) {
  if (!(h > 0.0 && h < 1.0)) throw FemError("step size must lie in (0, 1)");
  int exponent = 0;
  const double mantissa = std::frexp(h, &exponent);
  if (mantissa != 0.5) throw FemError("step size is not of the form 2^-k");
  return 1 - exponent;
}

Mesh2D build_mesh(double h, ElementType type) {
  const int level = dyadic_level(h);
  if (level < 2) throw FemError("mesh too coarse: need h <= 2^-2");
  Mesh2D mesh;
  mesh.h = h;
  mesh.cells_per_side = 1 << level;
  mesh.element_type = type;
  const int n = mesh.cells_per_side;
  const int side = n + 1;
  mesh.vertices.reserve(static_cast<size_t>(side) * side);
  mesh.dof_of_vertex.assign(static_cast<size_t>(side) * side, -1);
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      const int v = j * side + i;
      mesh.vertices.push_back({i * h, j * h});
      if (i == 0 || j == 0 || i == n || j == n) {
        mesh.boundary_vertices.push_back(v);
      } else {
        mesh.dof_of_vertex[v] = static_cast<int>(mesh.vertex_of_dof.size());
        mesh.vertex_of_dof.push_back(v);
      }
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = j * side + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + side;
      const int v11 = v01 + 1;
      if (type == ElementType::P1Triangle) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.quads.push_back({v00, v10, v11, v01});
      }
    }
  }
  return mesh;
}

double gaussian_width_from_neighbor_fraction(double spacing, double fraction) {
  if (!(spacing > 0.0)) throw FemError("spacing must be positive");
  if (!(fraction > 0.0 && fraction < 1.0)) throw FemError("fraction must lie in (0, 1)");
  return spacing * spacing / std::log(1.0 / fraction);
}

double GaussianSourceGrid::spacing() const {
  return m > 1 ? (upper - lower) / (m - 1) : 0.0;
}

std::vector<Point> GaussianSourceGrid::centers() const {
  std::vector<Point> out;
  out.reserve(static_cast<size_t>(count()));
  const double d = spacing();
  const double mid = 0.5 * (lower + upper);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      out.push_back(m > 1 ? Point{lower + i * d, lower + j * d} : Point{mid, mid});
    }
  }
  return out;
}

GaussianSourceGrid make_source_grid(int m, double lower, double upper, double height,
                                    double neighbor_fraction) {
  if (m < 2) throw FemError("source grid needs m >= 2");
  if (!(lower > 0.0 && upper < 1.0 && lower < upper)) {
    throw FemError("source subdomain must lie strictly inside (0,1)^2");
  }
  GaussianSourceGrid grid;
  grid.m = m;
  grid.lower = lower;
  grid.upper = upper;
  grid.height = height;
  grid.width = gaussian_width_from_neighbor_fraction(grid.spacing(), neighbor_fraction);
  return grid;
}

Matrix gaussian_nodal_values(const Mesh2D& mesh, std::span<const Point> centers, double height,
                             double width) {
  if (!(height > 0.0) || !(width > 0.0)) throw FemError("Gaussian height and width must be positive");
  Matrix phi(mesh.interior_count(), static_cast<Eigen::Index>(centers.size()));
  for (int dof = 0; dof < mesh.interior_count(); ++dof) {
    const Point& x = mesh.vertices[mesh.vertex_of_dof[dof]];
    for (size_t k = 0; k < centers.size(); ++k) {
      const double dx = x.x - centers[k].x;
      const double dy = x.y - centers[k].y;
      phi(dof, static_cast<Eigen::Index>(k)) = height * std::exp(-(dx * dx + dy * dy) / width);
    }
  }
  return phi;
}

Point default_wind(const Point& x) {
  return {2.0 * x.y * (1.0 - x.x * x.x), -2.0 * x.x * (1.0 - x.y * x.y)};
}

FemSystem assemble_poisson(const Mesh2D& mesh, const GaussianSourceGrid& grid, PdeKind kind) {
  const auto centers = grid.centers();
  return assemble_poisson(mesh, centers, grid.height, grid.width,
                          std::sqrt(2.0) * grid.spacing() * kAdjacencySlack, kind);
}

FemSystem assemble_poisson(const Mesh2D& mesh, std::span<const Point> centers, double height,
                           double width, double adjacency_radius, PdeKind kind) {
  if (mesh.element_type != ElementType::P1Triangle) throw FemError("Poisson assembly needs a P1 mesh");
  if (kind == PdeKind::ConvectionDiffusion) {
    throw FemError("use assemble_convection_diffusion for the convection-diffusion kind");
  }
  if (mesh.triangles.empty()) throw FemError("mesh has no elements");
  for (const auto& c : centers) {
    if (!(c.x > 0.0 && c.x < 1.0 && c.y > 0.0 && c.y < 1.0)) {
      throw FemError("source centre outside the open unit square");
    }
  }

  const int n = mesh.interior_count();
  std::vector<linalg::Triplet> mass_entries;
  std::vector<linalg::Triplet> stiff_entries;
  mass_entries.reserve(mesh.triangles.size() * 9);
  stiff_entries.reserve(mesh.triangles.size() * 9);
  for (const auto& tri : mesh.triangles) {
    const Point& a = mesh.vertices.at(tri[0]);
    const Point& b = mesh.vertices.at(tri[1]);
    const Point& c = mesh.vertices.at(tri[2]);
    const double area = triangle_area(a, b, c);
    if (!(area > 0.0)) throw FemError("degenerate or clockwise triangle");
    const auto grads = barycentric_gradients(a, b, c, area);
    for (int r = 0; r < 3; ++r) {
      const int row = mesh.dof_of_vertex[tri[r]];
      if (row < 0) continue;
      for (int s = 0; s < 3; ++s) {
        const int col = mesh.dof_of_vertex[tri[s]];
        if (col < 0) continue;
        mass_entries.emplace_back(row, col, area / 12.0 * (r == s ? 2.0 : 1.0));
        stiff_entries.emplace_back(row, col,
                                   area * (grads[r].x * grads[s].x + grads[r].y * grads[s].y));
      }
    }
  }

  FemSystem system;
  system.kind = kind;
  system.mesh = mesh;
  system.mass = std::make_shared<const SparseMatrix>(to_sparse(n, mass_entries));
  system.stiffness = std::make_shared<const SparseMatrix>(to_sparse(n, stiff_entries));
  system.sources = gaussian_nodal_values(mesh, centers, height, width);
  system.mass_sources = (*system.mass) * system.sources;
  system.source_positions.assign(centers.begin(), centers.end());
  system.adjacency_radius = adjacency_radius;
  system.source_height = height;
  system.source_width = width;
  finalize_factorizations(system, linalg::FactorKind::SymmetricPositiveDefinite);
  return system;
}

double supg_tau(double wind_norm, double h) {
  if (wind_norm <= 0.0) return 0.0;
  const double peclet = wind_norm * h / 2.0;
  // coth(Pe) - 1/Pe ~ Pe/3 for small Pe
  const double xi = peclet < 1e-4 ? peclet / 3.0 : 1.0 / std::tanh(peclet) - 1.0 / peclet;
  return h / (2.0 * wind_norm) * xi;
}

FemSystem assemble_convection_diffusion(const Mesh2D& mesh, int patches_per_side,
                                        const WindField& wind) {
  if (mesh.element_type != ElementType::Q1Quad) {
    throw FemError("convection-diffusion assembly needs a Q1 mesh");
  }
  if (patches_per_side < 1 || mesh.cells_per_side % patches_per_side != 0) {
    throw FemError("patch decomposition is not aligned with the mesh");
  }
  const int n = mesh.interior_count();
  const int l = patches_per_side * patches_per_side;
  const int cells_per_patch = mesh.cells_per_side / patches_per_side;
  const double h = mesh.h;

  std::vector<linalg::Triplet> mass_entries;
  std::vector<linalg::Triplet> stiff_entries;
  Matrix loads = Matrix::Zero(n, l);

  for (size_t e = 0; e < mesh.quads.size(); ++e) {
    const auto& quad = mesh.quads[e];
    const Point& origin = mesh.vertices.at(quad[0]);
    const Point centre{origin.x + 0.5 * h, origin.y + 0.5 * h};
    const Point w_centre = wind(centre);
    const double tau = supg_tau(std::hypot(w_centre.x, w_centre.y), h);
    const int cell_i = static_cast<int>(e) % mesh.cells_per_side;
    const int cell_j = static_cast<int>(e) / mesh.cells_per_side;
    const int patch = (cell_j / cells_per_patch) * patches_per_side + cell_i / cells_per_patch;

    double me[4][4] = {}, ke[4][4] = {};
    double be[4] = {};
    const double det = h * h / 4.0;
    for (int gi = 0; gi < 3; ++gi) {
      for (int gj = 0; gj < 3; ++gj) {
        const double xi = kGaussPoints[gi];
        const double eta = kGaussPoints[gj];
        const double weight = kGaussWeights[gi] * kGaussWeights[gj] * det;
        const Point x{origin.x + (xi + 1.0) * h / 2.0, origin.y + (eta + 1.0) * h / 2.0};
        const Point w = wind(x);
        double shape[4], dx[4], dy[4], stream[4];
        for (int a = 0; a < 4; ++a) {
          const double xa = kQuadCorners[a][0];
          const double ya = kQuadCorners[a][1];
          shape[a] = 0.25 * (1.0 + xa * xi) * (1.0 + ya * eta);
          dx[a] = 0.25 * xa * (1.0 + ya * eta) * 2.0 / h;
          dy[a] = 0.25 * ya * (1.0 + xa * xi) * 2.0 / h;
          stream[a] = w.x * dx[a] + w.y * dy[a];
        }
        for (int a = 0; a < 4; ++a) {
          // Q1 shape functions have zero Laplacian, so the SUPG residual is w.grad only
          be[a] += weight * (shape[a] + tau * stream[a]);
          for (int b = 0; b < 4; ++b) {
            me[a][b] += weight * shape[a] * shape[b];
            ke[a][b] += weight * (dx[a] * dx[b] + dy[a] * dy[b] + stream[b] * shape[a] +
                                  tau * stream[b] * stream[a]);
          }
        }
      }
    }
    for (int a = 0; a < 4; ++a) {
      const int row = mesh.dof_of_vertex[quad[a]];
      if (row < 0) continue;
      loads(row, patch) += be[a];
      for (int b = 0; b < 4; ++b) {
        const int col = mesh.dof_of_vertex[quad[b]];
        if (col < 0) continue;
        mass_entries.emplace_back(row, col, me[a][b]);
        stiff_entries.emplace_back(row, col, ke[a][b]);
      }
    }
  }

  FemSystem system;
  system.kind = PdeKind::ConvectionDiffusion;
  system.mesh = mesh;
  system.mass = std::make_shared<const SparseMatrix>(to_sparse(n, mass_entries));
  system.stiffness = std::make_shared<const SparseMatrix>(to_sparse(n, stiff_entries));
  const bool symmetric = linalg::is_symmetric(*system.stiffness);
  finalize_factorizations(system, symmetric ? linalg::FactorKind::SymmetricPositiveDefinite
                                            : linalg::FactorKind::General);
  system.sources = system.mass_factor->solve(loads);
  system.mass_sources = loads;
  const double patch_size = 1.0 / patches_per_side;
  for (int j = 0; j < patches_per_side; ++j) {
    for (int i = 0; i < patches_per_side; ++i) {
      system.source_positions.push_back({(i + 0.5) * patch_size, (j + 0.5) * patch_size});
    }
  }
  system.adjacency_radius = std::sqrt(2.0) * patch_size * kAdjacencySlack;
  return system;
}

Vector quadratic_load(const FemSystem& system, const Vector& y) {
  const Mesh2D& mesh = system.mesh;
  Vector out = Vector::Zero(system.state_dim());
  for (const auto& tri : mesh.triangles) {
    const double area = triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                      mesh.vertices[tri[2]]);
    double local[3];
    for (int a = 0; a < 3; ++a) {
      const int dof = mesh.dof_of_vertex[tri[a]];
      local[a] = dof < 0 ? 0.0 : y(dof);
    }
    for (int a = 0; a < 3; ++a) {
      const int row = mesh.dof_of_vertex[tri[a]];
      if (row < 0) continue;
      double sum = 0.0;
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) sum += local[b] * local[c] * triple_integral(a, b, c, area);
      }
      out(row) += sum;
    }
  }
  return out;
}

SparseMatrix quadratic_jacobian(const FemSystem& system, const Vector& y) {
  const Mesh2D& mesh = system.mesh;
  std::vector<linalg::Triplet> entries;
  entries.reserve(mesh.triangles.size() * 9);
  for (const auto& tri : mesh.triangles) {
    const double area = triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                      mesh.vertices[tri[2]]);
    double local[3];
    for (int a = 0; a < 3; ++a) {
      const int dof = mesh.dof_of_vertex[tri[a]];
      local[a] = dof < 0 ? 0.0 : y(dof);
    }
    for (int a = 0; a < 3; ++a) {
      const int row = mesh.dof_of_vertex[tri[a]];
      if (row < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const int col = mesh.dof_of_vertex[tri[b]];
        if (col < 0) continue;
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) sum += local[c] * triple_integral(a, b, c, area);
        entries.emplace_back(row, col, sum);
      }
    }
  }
  return to_sparse(system.state_dim(), entries);
}

NonlinearEvaluation nonlinear_residual_and_jacobian(const FemSystem& system, const Vector& y,
                                                    const Vector& u) {
  if (system.kind != PdeKind::NonlinearPoisson) {
    throw FemError("nonlinear residual requested for a linear PDE kind");
  }
  check_control(system, u);
  NonlinearEvaluation eval;
  eval.residual = (*system.stiffness) * y + quadratic_load(system, y) - system.mass_sources * u;
  eval.state_jacobian = *system.stiffness + 2.0 * quadratic_jacobian(system, y);
  eval.control_jacobian = -system.mass_sources;
  return eval;
}

double state_residual(const FemSystem& system, const Vector& y, const Vector& u) {
  check_control(system, u);
  const Vector rhs = system.mass_sources * u;
  Vector residual = (*system.stiffness) * y - rhs;
  if (system.kind == PdeKind::NonlinearPoisson) residual += quadratic_load(system, y);
  return residual.norm() / std::max(1.0, rhs.norm());
}

Vector solve_state(const FemSystem& system, const Vector& u) {
  check_control(system, u);
  const Vector rhs = system.mass_sources * u;
  Vector y = system.stiffness_factor->solve(rhs);
  if (system.kind != PdeKind::NonlinearPoisson) {
    const double rel = ((*system.stiffness) * y - rhs).norm() / std::max(rhs.norm(), 1e-300);
    if (rhs.norm() > 0.0 && !(rel <= 1e-10)) {
      throw FemError("state solve residual too large: " + std::to_string(rel));
    }
    return y;
  }

  const double scale = rhs.norm();
  if (scale == 0.0) return Vector::Zero(system.state_dim());
  const double tol = 1e-10 * scale;
  auto residual_of = [&](const Vector& v) {
    return Vector((*system.stiffness) * v + quadratic_load(system, v) - rhs);
  };
  Vector residual = residual_of(y);
  double norm = residual.norm();
  for (int it = 0; it < 50 && norm > tol; ++it) {
    const SparseMatrix jac = *system.stiffness + 2.0 * quadratic_jacobian(system, y);
    const linalg::Factorization lu(jac, linalg::FactorKind::General);
    const Vector step = lu.solve(Vector(-residual));
    double alpha = 1.0;
    Vector trial = y + step;
    Vector trial_residual = residual_of(trial);
    for (int halving = 0; halving < 20 && trial_residual.norm() >= norm; ++halving) {
      alpha *= 0.5;
      trial = y + alpha * step;
      trial_residual = residual_of(trial);
    }
    y = std::move(trial);
    residual = std::move(trial_residual);
    norm = residual.norm();
  }
  if (!(norm <= tol)) {
    throw FemError("Newton state solve did not converge, residual " + std::to_string(norm));
  }
  return y;
}

Vector interpolate(const Mesh2D& mesh, const std::function<double(const Point&)>& fn) {
  Vector out(mesh.interior_count());
  for (int dof = 0; dof < mesh.interior_count(); ++dof) {
    out(dof) = fn(mesh.vertices[mesh.vertex_of_dof[dof]]);
  }
  return out;
}

double l2_error(const Mesh2D& mesh, const Vector& y,
                const std::function<double(const Point&)>& exact) {
  if (mesh.element_type != ElementType::P1Triangle) throw FemError("l2_error needs a P1 mesh");
  double sum = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Point& a = mesh.vertices[tri[0]];
    const Point& b = mesh.vertices[tri[1]];
    const Point& c = mesh.vertices[tri[2]];
    const double area = triangle_area(a, b, c);
    double local[3];
    for (int k = 0; k < 3; ++k) {
      const int dof = mesh.dof_of_vertex[tri[k]];
      local[k] = dof < 0 ? 0.0 : y(dof);
    }
    for (const auto& q : dunavant5()) {
      const Point x{q.lambda[0] * a.x + q.lambda[1] * b.x + q.lambda[2] * c.x,
                    q.lambda[0] * a.y + q.lambda[1] * b.y + q.lambda[2] * c.y};
      const double uh = q.lambda[0] * local[0] + q.lambda[1] * local[1] + q.lambda[2] * local[2];
      const double diff = uh - exact(x);
      sum += q.weight * area * diff * diff;
    }
  }
  return std::sqrt(sum);
}

ManufacturedResult manufactured_poisson_error(double h) {
  constexpr double pi = std::numbers::pi;
  const Mesh2D mesh = build_mesh(h);
  const GaussianSourceGrid grid = make_source_grid(2, 0.25, 0.75);
  const FemSystem system = assemble_poisson(mesh, grid);
  auto exact = [](const Point& x) { return std::sin(pi * x.x) * std::sin(pi * x.y); };
  const Vector f = 2.0 * pi * pi * interpolate(mesh, exact);
  const Vector y = system.stiffness_factor->solve(Vector((*system.mass) * f));
  return {h, l2_error(mesh, y, exact)};
}

}  // namespace mipdeco::fem
