#include "gino/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gino::geometry {

Eigen::VectorXd quadrature_weights(const Mesh& mesh) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) mu[mesh.faces(f, c)] += mesh.areas[f] / 3.0;
  return mu;
}

PointSample subsample_mesh(const Mesh& mesh, Index rate, std::uint64_t seed) {
  const Index n = mesh.num_vertices();
  if (rate < 1) throw ValidationError("sampling rate must be >= 1");
  if (rate > n) throw ValidationError("sampling rate " + std::to_string(rate) + " exceeds vertex count " + std::to_string(n));
  const Eigen::VectorXd mu = quadrature_weights(mesh);
  PointSample s;
  s.indices.resize(static_cast<std::size_t>(n));
  std::iota(s.indices.begin(), s.indices.end(), Index{0});
  const Index keep = (n + rate - 1) / rate;
  if (rate > 1) {
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: the first `keep` slots become a uniform sample
    for (Index i = 0; i < keep; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(s.indices[static_cast<std::size_t>(i)], s.indices[static_cast<std::size_t>(pick(rng))]);
    }
    s.indices.resize(static_cast<std::size_t>(keep));
    std::sort(s.indices.begin(), s.indices.end());
  }
  s.points.resize(keep, 3);
  s.weights.resize(keep);
  for (Index i = 0; i < keep; ++i) {
    const Index v = s.indices[static_cast<std::size_t>(i)];
    s.points.row(i) = mesh.vertices.row(v);
    s.weights[i] = mu[v] * static_cast<double>(rate);
  }
  return s;
}

Vec3 front_point(const Mesh& mesh) {
  const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  return Vec3(lo.x(), 0.5 * (lo.y() + hi.y()), 0.5 * (lo.z() + hi.z()));
}

SurfaceField oracle_field(const Mesh& mesh, double inlet_velocity) {
  const Points3 n = mesh.vertex_normals();
  const Vec3 dir = inlet_direction();
  const Vec3 xf = front_point(mesh);
  const double v2 = inlet_velocity * inlet_velocity;
  SurfaceField f;
  f.pressure.resize(mesh.num_vertices());
  f.shear.resize(mesh.num_vertices());
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    const double ni = n.row(i).dot(dir);
    const Vec3 x = mesh.vertices.row(i);
    f.pressure[i] = v2 * ni * std::exp(-(x - xf).norm());
    f.shear[i] = 0.05 * v2 * (1.0 - ni * ni);
  }
  return f;
}

double frontal_area(const Mesh& mesh, const Vec3& direction) {
  // Orthonormal frame (e1, e2) of the plane normal to `direction`.
  const Vec3 d = direction.normalized();
  Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = d.cross(helper).normalized();
  const Vec3 e2 = d.cross(e1);
  const Eigen::VectorXd u = mesh.vertices * e1, w = mesh.vertices * e2;
  return (u.maxCoeff() - u.minCoeff()) * (w.maxCoeff() - w.minCoeff());
}

DragFunctional drag_functional(const Mesh& mesh, double inlet_velocity, double area, const Vec3& direction) {
  if (!(area > 0)) throw ValidationError("frontal area must be positive");
  if (inlet_velocity == 0) throw ValidationError("inlet velocity must be nonzero");
  const double factor = 2.0 / (inlet_velocity * inlet_velocity * area);
  DragFunctional g{Eigen::VectorXd::Zero(mesh.num_vertices()), Eigen::VectorXd::Zero(mesh.num_vertices())};
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const double a = mesh.areas[f] / 3.0;
    const double ni = mesh.normals.row(f).dot(direction);
    for (int c = 0; c < 3; ++c) {
      g.pressure[mesh.faces(f, c)] += factor * a * ni;
      g.shear[mesh.faces(f, c)] += factor * a;
    }
  }
  return g;
}

DragReport drag_coefficient(const Mesh& mesh, const SurfaceField& field, double inlet_velocity, double area,
                            const Vec3& direction) {
  if (!(area > 0)) throw ValidationError("frontal area must be positive");
  if (inlet_velocity == 0) throw ValidationError("inlet velocity must be nonzero");
  if (field.pressure.size() != mesh.num_vertices() || field.shear.size() != mesh.num_vertices())
    throw DimensionError("surface field needs one value per vertex");
  DragReport r;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    const double pf = (field.pressure[a] + field.pressure[b] + field.pressure[c]) / 3.0;
    const double sf = (field.shear[a] + field.shear[b] + field.shear[c]) / 3.0;
    r.pressure_term += pf * mesh.normals.row(f).dot(direction) * mesh.areas[f];
    r.shear_term += sf * mesh.areas[f];
  }
  r.coefficient = 2.0 / (inlet_velocity * inlet_velocity * area) * (r.pressure_term + r.shear_term);
  return r;
}

}  // namespace gino::geometry
