#include "gino/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace gino::geometry {

namespace {

using LatticeMap = std::function<Vec3(Index, Index, Index)>;

// Surface of the integer lattice box [0,nx] x [0,ny] x [0,nz], each boundary quad split
// into two triangles, pushed through `map`. The map must preserve orientation.
Mesh lattice_surface(Index nx, Index ny, Index nz, const LatticeMap& map) {
  std::map<std::array<Index, 3>, int> ids;
  std::vector<Vec3> verts;
  auto vid = [&](Index i, Index j, Index k) {
    const std::array<Index, 3> key{i, j, k};
    auto it = ids.find(key);
    if (it != ids.end()) return it->second;
    verts.push_back(map(i, j, k));
    const int id = static_cast<int>(verts.size()) - 1;
    ids.emplace(key, id);
    return id;
  };
  std::vector<std::array<int, 3>> tris;
  // a quad given by its lattice corners in order p00, p10, p11, p01; `flip` reverses winding.
  auto quad = [&](std::array<Index, 3> p00, std::array<Index, 3> p10, std::array<Index, 3> p11,
                  std::array<Index, 3> p01, bool flip) {
    const int a = vid(p00[0], p00[1], p00[2]), b = vid(p10[0], p10[1], p10[2]);
    const int c = vid(p11[0], p11[1], p11[2]), d = vid(p01[0], p01[1], p01[2]);
    if (!flip) {
      tris.push_back({a, b, c});
      tris.push_back({a, c, d});
    } else {
      tris.push_back({a, c, b});
      tris.push_back({a, d, c});
    }
  };
  // Winding (p00 -> p10 -> p11) has normal e_first x e_second in lattice space.
  for (Index j = 0; j < ny; ++j)
    for (Index k = 0; k < nz; ++k) {
      quad({0, j, k}, {0, j + 1, k}, {0, j + 1, k + 1}, {0, j, k + 1}, true);        // -x
      quad({nx, j, k}, {nx, j + 1, k}, {nx, j + 1, k + 1}, {nx, j, k + 1}, false);  // +x
    }
  for (Index i = 0; i < nx; ++i)
    for (Index k = 0; k < nz; ++k) {
      quad({i, 0, k}, {i + 1, 0, k}, {i + 1, 0, k + 1}, {i, 0, k + 1}, false);      // -y: x cross z = -y
      quad({i, ny, k}, {i + 1, ny, k}, {i + 1, ny, k + 1}, {i, ny, k + 1}, true);   // +y
    }
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < ny; ++j) {
      quad({i, j, 0}, {i + 1, j, 0}, {i + 1, j + 1, 0}, {i, j + 1, 0}, true);       // -z
      quad({i, j, nz}, {i + 1, j, nz}, {i + 1, j + 1, nz}, {i, j + 1, nz}, false);  // +z
    }
  Points3 V(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(static_cast<Index>(i)) = verts[i];
  Faces F(static_cast<Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i)
    for (int c = 0; c < 3; ++c) F(static_cast<Index>(i), c) = tris[i][static_cast<std::size_t>(c)];
  return Mesh::from(std::move(V), std::move(F));
}

Index lattice_surface_vertices(Index nx, Index ny, Index nz) {
  return (nx + 1) * (ny + 1) * (nz + 1) - (nx - 1) * (ny - 1) * (nz - 1);
}

// Piecewise-uniform subdivision of [breaks.front(), breaks.back()] with every break on a node.
std::vector<double> subdivide(const std::vector<double>& breaks, double spacing) {
  std::vector<double> nodes{breaks.front()};
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double len = breaks[s + 1] - breaks[s];
    const Index n = std::max<Index>(1, static_cast<Index>(std::lround(len / spacing)));
    for (Index i = 1; i <= n; ++i) nodes.push_back(i == n ? breaks[s + 1] : breaks[s] + len * static_cast<double>(i) / static_cast<double>(n));
  }
  return nodes;
}

struct Profile {
  double length, width, bottom, top;
  double chamfer;      // leg of the 45-degree front chamfers
  double slant_run;    // horizontal extent of the rear slant
  double slant_drop;   // vertical drop of the rear slant
  double ground_top;   // z extent including the ground gap

  double z_bottom(double x) const { return bottom + std::max(0.0, chamfer - x); }
  double z_top(double x) const {
    double z = top - std::max(0.0, chamfer - x);
    const double slant_start = length - slant_run;
    if (slant_run > 0 && x > slant_start) z = top - (x - slant_start) * (slant_drop / slant_run);
    return z;
  }
  std::vector<double> x_breaks() const {
    std::vector<double> b{0.0, chamfer};
    if (slant_run > 0) b.push_back(length - slant_run);
    b.push_back(length);
    return b;
  }
};

Profile make_profile(const AhmedParams& p) {
  Profile pr{};
  pr.length = p.length;
  pr.width = p.width;
  pr.bottom = p.ground_clearance;
  pr.top = p.ground_clearance + p.height;
  // Chamfers and slant are capped so front and rear faces keep a positive height.
  pr.chamfer = std::min(p.fillet_radius, 0.4 * p.height);
  if (p.slant_angle > 0) {
    const double tan_a = std::tan(p.slant_angle * M_PI / 180.0);
    pr.slant_run = 0.2 * p.length;
    pr.slant_drop = pr.slant_run * tan_a;
    if (pr.slant_drop > 0.5 * p.height) {
      pr.slant_drop = 0.5 * p.height;
      pr.slant_run = pr.slant_drop / tan_a;
    }
  }
  pr.ground_top = pr.top;
  return pr;
}

}  // namespace

const std::vector<AhmedParams::Bound>& AhmedParams::bounds() {
  static const std::vector<Bound> b = {
      {"length", 644, 1444},          {"width", 239, 539},        {"height", 208, 368},
      {"ground_clearance", 30, 90},   {"slant_angle", 0, 40},     {"fillet_radius", 80, 120},
      {"inlet_velocity", 10, 70},
  };
  return b;
}

std::vector<double> AhmedParams::as_vector() const {
  return {length, width, height, ground_clearance, slant_angle, fillet_radius, inlet_velocity};
}

AhmedParams AhmedParams::from_vector(const std::vector<double>& v) {
  if (v.size() != 7) throw ValidationError("AhmedParams needs 7 values");
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

AhmedParams AhmedParams::midpoint() {
  std::vector<double> v;
  for (const auto& b : bounds()) v.push_back(0.5 * (b.lo + b.hi));
  return from_vector(v);
}

void AhmedParams::validate() const {
  const auto v = as_vector();
  std::ostringstream bad;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& b = bounds()[i];
    if (!(v[i] >= b.lo && v[i] <= b.hi)) bad << " " << b.name << "=" << v[i] << " not in [" << b.lo << ", " << b.hi << "]";
  }
  if (!bad.str().empty()) throw ValidationError("Ahmed parameters out of bounds:" + bad.str());
}

Mesh box(const Vec3& lo, const Vec3& hi, int n) {
  if (n < 1) throw ValidationError("box subdivisions must be >= 1");
  const Vec3 step = (hi - lo) / static_cast<double>(n);
  return lattice_surface(n, n, n, [&](Index i, Index j, Index k) {
    return Vec3(lo.x() + step.x() * static_cast<double>(i), lo.y() + step.y() * static_cast<double>(j),
                lo.z() + step.z() * static_cast<double>(k));
  });
}

Mesh generate_ahmed_like(const AhmedParams& params, const AhmedMeshOptions& options) {
  params.validate();
  if (options.target_vertices < 8) throw ValidationError("target_vertices must be >= 8");
  const Profile pr = make_profile(params);

  // Physical bounding box includes the ground gap below the body.
  const Vec3 lo(0.0, -0.5 * pr.width, 0.0);
  const Vec3 hi(pr.length, 0.5 * pr.width, pr.top);
  const double scale = 2.0 * options.normalized_extent / (hi - lo).maxCoeff();
  const Vec3 center = 0.5 * (lo + hi);

  // Pick the lattice spacing whose surface vertex count first reaches the target.
  const std::vector<double> xb = pr.x_breaks();
  std::vector<double> xs;
  Index ny = 1, nz = 1;
  double spacing = (hi - lo).maxCoeff();
  for (int iter = 0; iter < 400; ++iter) {
    xs = subdivide(xb, spacing);
    ny = std::max<Index>(1, std::lround(pr.width / spacing));
    nz = std::max<Index>(1, std::lround(params.height / spacing));
    if (lattice_surface_vertices(static_cast<Index>(xs.size()) - 1, ny, nz) >= options.target_vertices) break;
    spacing *= 0.97;
  }
  const Index nx = static_cast<Index>(xs.size()) - 1;

  return lattice_surface(nx, ny, nz, [&](Index i, Index j, Index k) {
    const double x = xs[static_cast<std::size_t>(i)];
    const double y = -0.5 * pr.width + pr.width * static_cast<double>(j) / static_cast<double>(ny);
    const double zb = pr.z_bottom(x), zt = pr.z_top(x);
    const double z = zb + (zt - zb) * static_cast<double>(k) / static_cast<double>(nz);
    return Vec3((x - center.x()) * scale, (y - center.y()) * scale, (z - center.z()) * scale);
  });
}

}  // namespace gino::geometry
