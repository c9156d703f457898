#include "gino/geometry.hpp"

#include <array>
#include <map>
#include <utility>

namespace gino::geometry {

Mesh Mesh::from(Points3 vertices, Faces faces) {
  Mesh m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  const Index n = m.vertices.rows();
  if (!m.vertices.allFinite()) throw ValidationError("mesh has non-finite vertex coordinates");
  m.normals.resize(m.faces.rows(), 3);
  m.areas.resize(m.faces.rows());
  for (Index f = 0; f < m.faces.rows(); ++f) {
    for (int c = 0; c < 3; ++c)
      if (m.faces(f, c) < 0 || m.faces(f, c) >= n)
        throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(m.faces(f, c)) +
                              " outside [0, " + std::to_string(n) + ")");
    const Vec3 a = m.vertices.row(m.faces(f, 0));
    const Vec3 b = m.vertices.row(m.faces(f, 1));
    const Vec3 c = m.vertices.row(m.faces(f, 2));
    const Vec3 cr = (b - a).cross(c - a);
    const double twice = cr.norm();
    if (!(twice > 0)) throw ValidationError("face " + std::to_string(f) + " is degenerate (zero area)");
    m.areas[f] = 0.5 * twice;
    m.normals.row(f) = cr / twice;
  }
  return m;
}

Vec3 Mesh::area_normal_sum() const {
  return (normals.array().colwise() * areas.array()).colwise().sum().transpose();
}

bool Mesh::is_watertight() const {
  // directed edge -> count; a closed oriented manifold has each directed edge once
  // and its reverse once.
  std::map<std::pair<int, int>, int> directed;
  for (Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = faces(f, c), b = faces(f, (c + 1) % 3);
      if (++directed[{a, b}] > 1) return false;
    }
  for (const auto& [edge, count] : directed)
    if (!directed.count({edge.second, edge.first})) return false;
  return faces.rows() > 0;
}

Points3 Mesh::vertex_normals() const {
  Points3 vn = Points3::Zero(vertices.rows(), 3);
  for (Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) vn.row(faces(f, c)) += areas[f] * normals.row(f);
  for (Index v = 0; v < vn.rows(); ++v) {
    const double len = vn.row(v).norm();
    if (len > 0) vn.row(v) /= len;
  }
  return vn;
}

double Mesh::signed_volume() const {
  double vol = 0;
  for (Index f = 0; f < faces.rows(); ++f) {
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    vol += a.dot(b.cross(c)) / 6.0;
  }
  return vol;
}

Mesh icosphere(double radius, int subdivisions, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& tri : tris) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    tris = std::move(next);
  }
  Points3 V(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(static_cast<Index>(i)) = center + radius * verts[i];
  Faces F(static_cast<Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i)
    for (int c = 0; c < 3; ++c) F(static_cast<Index>(i), c) = tris[i][static_cast<std::size_t>(c)];
  return Mesh::from(std::move(V), std::move(F));
}

}  // namespace gino::geometry
