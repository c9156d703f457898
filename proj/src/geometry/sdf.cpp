#include "gino/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace gino::geometry {

// Ericson, Real-Time Collision Detection, 5.1.5.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct SdfEvaluator::Bvh {
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int begin = 0, end = 0;     // triangle range in `order` for leaves
  };
  std::vector<std::array<Vec3, 3>> tris;
  std::vector<int> order;
  std::vector<Node> nodes;

  static constexpr int kLeafSize = 4;

  explicit Bvh(const Mesh& mesh) {
    const Index nf = mesh.num_faces();
    tris.resize(static_cast<std::size_t>(nf));
    for (Index f = 0; f < nf; ++f)
      for (int c = 0; c < 3; ++c) tris[static_cast<std::size_t>(f)][static_cast<std::size_t>(c)] = mesh.vertices.row(mesh.faces(f, c));
    order.resize(static_cast<std::size_t>(nf));
    std::iota(order.begin(), order.end(), 0);
    if (nf > 0) build(0, static_cast<int>(nf));
  }

  Vec3 centroid(int t) const {
    const auto& tr = tris[static_cast<std::size_t>(t)];
    return (tr[0] + tr[1] + tr[2]) / 3.0;
  }

  int build(int begin, int end) {
    Node node;
    for (int i = begin; i < end; ++i)
      for (const auto& v : tris[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) node.box.extend(v);
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes[static_cast<std::size_t>(id)].begin = begin;
      nodes[static_cast<std::size_t>(id)].end = end;
      return id;
    }
    Eigen::AlignedBox3d cbox;
    for (int i = begin; i < end; ++i) cbox.extend(centroid(order[static_cast<std::size_t>(i)]));
    int axis;
    cbox.sizes().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](int a, int b) { return centroid(a)[axis] < centroid(b)[axis]; });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  double nearest_sq(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    if (nodes.empty()) return best;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      if (n.box.squaredExteriorDistance(p) >= best) continue;
      if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
          const auto& t = tris[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
          best = std::min(best, (closest_point_on_triangle(p, t[0], t[1], t[2]) - p).squaredNorm());
        }
        continue;
      }
      const Node& L = nodes[static_cast<std::size_t>(n.left)];
      const Node& R = nodes[static_cast<std::size_t>(n.right)];
      // visit the nearer child first
      if (L.box.squaredExteriorDistance(p) < R.box.squaredExteriorDistance(p)) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    return best;
  }

  static bool ray_hits_box(const Vec3& o, const Vec3& inv_d, const Eigen::AlignedBox3d& b) {
    double t0 = 0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      double tn = (b.min()[a] - o[a]) * inv_d[a];
      double tf = (b.max()[a] - o[a]) * inv_d[a];
      if (tn > tf) std::swap(tn, tf);
      t0 = std::max(t0, tn);
      t1 = std::min(t1, tf);
      if (t0 > t1) return false;
    }
    return true;
  }

  // Moller-Trumbore, counting hits with t > 0.
  static bool ray_hits_triangle(const Vec3& o, const Vec3& d, const std::array<Vec3, 3>& t) {
    const Vec3 e1 = t[1] - t[0], e2 = t[2] - t[0];
    const Vec3 pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = o - t[0];
    const double u = tv.dot(pv) * inv;
    if (u < 0 || u > 1) return false;
    const Vec3 qv = tv.cross(e1);
    const double v = d.dot(qv) * inv;
    if (v < 0 || u + v > 1) return false;
    return e2.dot(qv) * inv > 0;
  }

  int crossings(const Vec3& o, const Vec3& d) const {
    if (nodes.empty()) return 0;
    const Vec3 inv_d = d.cwiseInverse();
    int count = 0;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      if (!ray_hits_box(o, inv_d, n.box)) continue;
      if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i)
          if (ray_hits_triangle(o, d, tris[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])) ++count;
        continue;
      }
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
    return count;
  }
};

SdfEvaluator::SdfEvaluator(const Mesh& mesh) : bvh_(std::make_unique<Bvh>(mesh)), watertight_(mesh.is_watertight()) {
  if (mesh.num_faces() == 0) throw ValidationError("SDF of an empty mesh");
}
SdfEvaluator::~SdfEvaluator() = default;
SdfEvaluator::SdfEvaluator(SdfEvaluator&&) noexcept = default;
SdfEvaluator& SdfEvaluator::operator=(SdfEvaluator&&) noexcept = default;

double SdfEvaluator::unsigned_distance(const Vec3& p) const { return std::sqrt(bvh_->nearest_sq(p)); }

bool SdfEvaluator::inside(const Vec3& p) const {
  // Directions chosen off the coordinate planes so rays rarely graze lattice edges.
  static const std::array<Vec3, 3> dirs = {Vec3(0.5773, 0.5774, 0.5775).normalized(),
                                           Vec3(-0.3141, 0.8112, -0.4933).normalized(),
                                           Vec3(0.7071, -0.1234, -0.6963).normalized()};
  int votes = 0;
  for (const auto& d : dirs) votes += bvh_->crossings(p, d) % 2;
  return votes >= 2;
}

double SdfEvaluator::signed_distance(const Vec3& p) const {
  if (!watertight_) throw ContractError("signed distance requires a watertight mesh");
  const double d = unsigned_distance(p);
  return inside(p) ? -d : d;
}

Eigen::VectorXd sdf_eval(const Mesh& mesh, const Points3& points, bool signed_result) {
  const SdfEvaluator ev(mesh);
  if (signed_result && !ev.watertight()) throw ContractError("signed distance requires a watertight mesh");
  Eigen::VectorXd out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    const Vec3 p = points.row(i);
    out[i] = signed_result ? ev.signed_distance(p) : ev.unsigned_distance(p);
  }
  return out;
}

Eigen::VectorXd brute_force_distance(const Mesh& mesh, const Points3& points) {
  Eigen::VectorXd out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    const Vec3 p = points.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (Index f = 0; f < mesh.num_faces(); ++f) {
      const Vec3 q = closest_point_on_triangle(p, mesh.vertices.row(mesh.faces(f, 0)), mesh.vertices.row(mesh.faces(f, 1)),
                                               mesh.vertices.row(mesh.faces(f, 2)));
      best = std::min(best, (q - p).squaredNorm());
    }
    out[i] = std::sqrt(best);
  }
  return out;
}

Points3 grid_nodes(Index resolution) {
  if (resolution < 2) throw ValidationError("grid resolution must be >= 2");
  Points3 out(resolution * resolution * resolution, 3);
  const double h = 2.0 / static_cast<double>(resolution - 1);
  Index r = 0;
  for (Index i = 0; i < resolution; ++i)
    for (Index j = 0; j < resolution; ++j)
      for (Index k = 0; k < resolution; ++k, ++r)
        out.row(r) << -1.0 + h * static_cast<double>(i), -1.0 + h * static_cast<double>(j), -1.0 + h * static_cast<double>(k);
  return out;
}

SdfGrid rasterize_sdf(const Mesh& mesh, Index resolution) {
  SdfGrid g;
  g.resolution = resolution;
  g.spacing = 2.0 / static_cast<double>(resolution - 1);
  g.values = sdf_eval(mesh, grid_nodes(resolution), true);
  return g;
}

double SdfGrid::interpolate(const Vec3& p) const {
  const Index S = resolution;
  Eigen::Array3d u = ((p - origin) / spacing).array();
  u = u.max(0.0).min(static_cast<double>(S - 1));
  Eigen::Array3i i0 = u.floor().cast<int>().min(static_cast<int>(S - 2));
  const Eigen::Array3d f = u - i0.cast<double>();
  double acc = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
        acc += w * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
      }
  return acc;
}

}  // namespace gino::geometry
