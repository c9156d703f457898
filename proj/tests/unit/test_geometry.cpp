#include "doctest.h"

#include "gino/geometry.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace gino;
using namespace gino::geometry;

namespace {

AhmedParams random_params(std::mt19937_64& rng) {
  std::vector<double> v;
  for (const auto& b : AhmedParams::bounds()) v.push_back(std::uniform_real_distribution<double>(b.lo, b.hi)(rng));
  return AhmedParams::from_vector(v);
}

Points3 random_points(Index n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Points3 p(n, 3);
  for (Index i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

}  // namespace

TEST_CASE("icosphere is closed and outward") {
  const Mesh m = icosphere(0.5, 3);
  CHECK(m.num_faces() == 1280);
  CHECK(m.is_watertight());
  CHECK(m.signed_volume() > 0);
  CHECK(m.area_normal_sum().norm() < 1e-12 * m.total_area());
}

TEST_CASE("box mesh") {
  const Mesh m = box(Vec3(-1, -2, -3), Vec3(1, 2, 3), 3);
  CHECK(m.is_watertight());
  CHECK(m.signed_volume() == doctest::Approx(48.0));
  CHECK(m.total_area() == doctest::Approx(2 * (8 + 12 + 24)));
}

TEST_CASE("mesh validation") {
  Points3 v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Faces f(1, 3);
  f << 0, 1, 3;
  CHECK_THROWS_AS(Mesh::from(v, f), ValidationError);
  f << 0, 1, 1;
  CHECK_THROWS_AS(Mesh::from(v, f), ValidationError);
}

TEST_CASE("Ahmed-like bodies are closed and fit the domain") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const AhmedParams p = random_params(rng);
    const Mesh m = generate_ahmed_like(p);
    CHECK(m.is_watertight());
    CHECK(m.signed_volume() > 0);
    CHECK(m.area_normal_sum().norm() <= 1e-6 * m.total_area());
    CHECK(m.bbox_min().minCoeff() >= -0.9 - 1e-12);
    CHECK(m.bbox_max().maxCoeff() <= 0.9 + 1e-12);
    CHECK(m.num_vertices() >= 2000);
    CHECK(m.num_vertices() < 2400);
  }
}

TEST_CASE("Ahmed-like body aspect and frontal area at table midpoints") {
  const AhmedParams p = AhmedParams::midpoint();
  const Mesh m = generate_ahmed_like(p);
  const Vec3 ext = m.bbox_max() - m.bbox_min();
  const double s = ext.x() / p.length;
  CHECK(ext.y() == doctest::Approx(p.width * s).epsilon(1e-12));
  CHECK(ext.z() == doctest::Approx(p.height * s).epsilon(1e-12));
  // projected bounding rectangle, recomputed directly from the vertices
  const double ylo = m.vertices.col(1).minCoeff(), yhi = m.vertices.col(1).maxCoeff();
  const double zlo = m.vertices.col(2).minCoeff(), zhi = m.vertices.col(2).maxCoeff();
  const double expected = p.width * p.height * s * s;
  CHECK(std::abs((yhi - ylo) * (zhi - zlo) - expected) <= 0.01 * expected);
  CHECK(frontal_area(m) == doctest::Approx((yhi - ylo) * (zhi - zlo)).epsilon(1e-12));
}

TEST_CASE("Ahmed-like body without slant has a vertical rear face") {
  AhmedParams p = AhmedParams::midpoint();
  p.slant_angle = 0;
  const Mesh m = generate_ahmed_like(p);
  const double xmax = m.bbox_max().x();
  for (Index f = 0; f < m.num_faces(); ++f) {
    const Vec3 n = m.normals.row(f);
    // every face is axis-aligned except the two front chamfer strips
    const bool axis = n.cwiseAbs().maxCoeff() > 1 - 1e-12;
    const bool chamfer = std::abs(std::abs(n.x()) - M_SQRT1_2) < 1e-9 && std::abs(std::abs(n.z()) - M_SQRT1_2) < 1e-9 && n.x() < 0;
    CHECK((axis || chamfer));
    const double cx = (m.vertices(m.faces(f, 0), 0) + m.vertices(m.faces(f, 1), 0) + m.vertices(m.faces(f, 2), 0)) / 3;
    if (std::abs(cx - xmax) < 1e-12) CHECK(n.x() == doctest::Approx(1.0));
  }
}

TEST_CASE("Ahmed parameter validation names the offending field") {
  AhmedParams p;
  p.slant_angle = 45;
  try {
    generate_ahmed_like(p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("slant_angle") != std::string::npos);
  }
  CHECK_NOTHROW(AhmedParams::midpoint().validate());
}

TEST_CASE("closest point on triangle regions") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK((closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c) - a).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(0.2, 0.2, 3), a, b, c) - Vec3(0.2, 0.2, 0)).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(1, 1, 0), a, b, c) - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
  CHECK((closest_point_on_triangle(Vec3(0.5, -2, 0), a, b, c) - Vec3(0.5, 0, 0)).norm() < 1e-15);
}

TEST_CASE("sdf on an icosphere") {
  const Mesh m = icosphere(0.5, 3);
  const SdfEvaluator ev(m);
  CHECK(ev.signed_distance(Vec3::Zero()) == doctest::Approx(-0.5).epsilon(0.01));
  CHECK(ev.signed_distance(m.vertices.row(17)) == 0.0);
  CHECK(ev.signed_distance(Vec3(1, 0, 0)) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("sdf magnitudes equal the brute-force oracle") {
  std::mt19937_64 rng(5);
  const Mesh m = generate_ahmed_like(random_params(rng));
  const Points3 q = random_points(100, -1, 1, 9);
  const Eigen::VectorXd got = sdf_eval(m, q, true).cwiseAbs();
  const Eigen::VectorXd ref = brute_force_distance(m, q);
  CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sdf sign flips across every face") {
  std::mt19937_64 rng(6);
  const Mesh m = generate_ahmed_like(random_params(rng));
  const SdfEvaluator ev(m);
  const double eps = 1e-4;
  for (Index f = 0; f < m.num_faces(); f += 7) {
    const Vec3 c = (Vec3(m.vertices.row(m.faces(f, 0))) + Vec3(m.vertices.row(m.faces(f, 1))) + Vec3(m.vertices.row(m.faces(f, 2)))) / 3;
    const Vec3 n = m.normals.row(f);
    CHECK(ev.signed_distance(c + eps * n) > 0);
    CHECK(ev.signed_distance(c - eps * n) < 0);
  }
}

TEST_CASE("sdf refuses a sign on an open mesh") {
  Mesh open = icosphere(0.5, 1);
  open = Mesh::from(open.vertices, open.faces.topRows(open.num_faces() - 1));
  const Points3 q = random_points(5, -1, 1, 2);
  CHECK_THROWS_AS(sdf_eval(open, q, true), ContractError);
  CHECK_NOTHROW(sdf_eval(open, q, false));
}

TEST_CASE("sdf grid") {
  const Mesh m = icosphere(0.5, 3);
  const SdfGrid g2 = rasterize_sdf(m, 2);
  CHECK(g2.values.size() == 8);
  CHECK(g2.values.minCoeff() > 0);
  CHECK_THROWS_AS(rasterize_sdf(m, 1), ValidationError);

  // nesting: node i of the S grid is node 2i of the 2S-1 grid
  const SdfGrid a = rasterize_sdf(m, 9), b = rasterize_sdf(m, 17);
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 9; ++j)
      for (Index k = 0; k < 9; ++k) CHECK(a.at(i, j, k) == b.at(2 * i, 2 * j, 2 * k));

  const SdfGrid fine = rasterize_sdf(m, 64);
  const Points3 q = random_points(1000, -1, 1, 4);
  const Eigen::VectorXd exact = sdf_eval(m, q);
  double worst = 0;
  for (Index i = 0; i < q.rows(); ++i) worst = std::max(worst, std::abs(fine.interpolate(q.row(i)) - exact[i]));
  CHECK(worst < 2 * fine.spacing);
  CHECK(grid_nodes(3).row(5) == Eigen::RowVector3d(-1, 0, 1));
}

TEST_CASE("quadrature weights") {
  Points3 v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Faces f(1, 3);
  f << 0, 1, 2;
  const Eigen::VectorXd mu = quadrature_weights(Mesh::from(v, f));
  CHECK(mu.isApproxToConstant(1.0 / 6.0));
  const Mesh s = icosphere(0.5, 3);
  CHECK(std::abs(quadrature_weights(s).sum() - M_PI) < 0.01 * M_PI);
  std::mt19937_64 rng(8);
  const Mesh a = generate_ahmed_like(random_params(rng));
  CHECK(std::abs(quadrature_weights(a).sum() - a.total_area()) <= 1e-12 * a.total_area());
}

TEST_CASE("mesh subsampling") {
  const Mesh s = icosphere(0.5, 3);
  const PointSample all = subsample_mesh(s, 1, 0);
  CHECK(static_cast<Index>(all.indices.size()) == s.num_vertices());
  for (Index i = 0; i < s.num_vertices(); ++i) CHECK(all.indices[static_cast<std::size_t>(i)] == i);

  Points3 v(100, 3);
  for (Index i = 0; i < 100; ++i) v.row(i) << std::cos(i), std::sin(i), 0.01 * double(i);
  Faces f(98, 3);
  for (Index i = 0; i < 98; ++i) f.row(i) << int(i), int(i + 1), int(i + 2);
  const Mesh strip = Mesh::from(v, f);
  const PointSample h1 = subsample_mesh(strip, 2, 42), h2 = subsample_mesh(strip, 2, 42);
  CHECK(h1.indices.size() == 50);
  CHECK(h1.indices == h2.indices);
  CHECK_THROWS_AS(subsample_mesh(strip, 101, 0), ValidationError);
  CHECK_THROWS_AS(subsample_mesh(strip, 0, 0), ValidationError);

  double acc = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) acc += subsample_mesh(s, 4, seed).weights.sum();
  CHECK(std::abs(acc / 100 - s.total_area()) < 0.05 * s.total_area());
}

TEST_CASE("oracle field") {
  const Mesh m = generate_ahmed_like(AhmedParams::midpoint());
  const SurfaceField f = oracle_field(m, 30);
  const Points3 n = m.vertex_normals();
  CHECK(f.pressure.allFinite());
  CHECK(f.pressure.cwiseAbs().maxCoeff() <= 900);
  CHECK(f.shear.cwiseAbs().maxCoeff() <= 900);
  for (Index i = 0; i < m.num_vertices(); ++i)
    if (std::abs(n(i, 0)) < 1e-14) CHECK(f.pressure[i] == 0.0);
  const SurfaceField g = oracle_field(m, 60);
  CHECK((g.pressure - 4 * f.pressure).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("drag identities") {
  const Mesh s = icosphere(0.5, 4);
  SurfaceField uniform{Eigen::VectorXd::Constant(s.num_vertices(), 3.0), Eigen::VectorXd::Zero(s.num_vertices())};
  const DragReport r = drag_coefficient(s, uniform, 10, 1.0);
  CHECK(std::abs(r.pressure_term) <= 1e-6 * 3.0 * s.total_area());
  CHECK(std::abs(r.coefficient) <= 1e-6);

  SurfaceField shear{Eigen::VectorXd::Zero(s.num_vertices()), Eigen::VectorXd::Constant(s.num_vertices(), 0.7)};
  CHECK(drag_coefficient(s, shear, 10, 2.0).coefficient == doctest::Approx(2 * 0.7 * s.total_area() / (100 * 2.0)));

  SurfaceField dirn{-s.vertex_normals().col(0), Eigen::VectorXd::Zero(s.num_vertices())};
  const double exact = 4.0 / 3.0 * M_PI * 0.25;
  CHECK(std::abs(drag_coefficient(s, dirn, 1, 1).pressure_term - exact) < 0.01 * exact);

  CHECK_THROWS_AS(drag_coefficient(s, dirn, 0, 1), ValidationError);
  CHECK_THROWS_AS(drag_coefficient(s, dirn, 1, 0), ValidationError);
}

TEST_CASE("drag is linear and matches its functional") {
  const Mesh m = generate_ahmed_like(AhmedParams::midpoint());
  const SurfaceField f = oracle_field(m, 25);
  const double A = frontal_area(m);
  const DragReport r = drag_coefficient(m, f, 25, A);
  const DragFunctional g = drag_functional(m, 25, A);
  CHECK(g.pressure.dot(f.pressure) + g.shear.dot(f.shear) == doctest::Approx(r.coefficient).epsilon(1e-12));
  SurfaceField twice{2 * f.pressure, f.shear};
  const DragReport r2 = drag_coefficient(m, twice, 25, A);
  CHECK(r2.pressure_term == doctest::Approx(2 * r.pressure_term).epsilon(1e-12));
  CHECK(r2.shear_term == doctest::Approx(r.shear_term).epsilon(1e-12));
}

TEST_CASE("drag is invariant under vertex reordering") {
  const Mesh m = generate_ahmed_like(AhmedParams::midpoint());
  const SurfaceField f = oracle_field(m, 25);
  const Index n = m.num_vertices();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Points3 v(n, 3);
  SurfaceField g{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    v.row(perm[static_cast<std::size_t>(i)]) = m.vertices.row(i);
    g.pressure[perm[static_cast<std::size_t>(i)]] = f.pressure[i];
    g.shear[perm[static_cast<std::size_t>(i)]] = f.shear[i];
  }
  Faces faces = m.faces;
  for (Index i = 0; i < faces.size(); ++i) faces.data()[i] = perm[static_cast<std::size_t>(faces.data()[i])];
  const Mesh p = Mesh::from(v, faces);
  const double A = frontal_area(m);
  CHECK(drag_coefficient(p, g, 25, A).coefficient == doctest::Approx(drag_coefficient(m, f, 25, A).coefficient).epsilon(1e-12));
}

TEST_CASE("obj round trip") {
  const Mesh m = icosphere(0.3, 1, Vec3(0.1, 0.2, 0.3));
  const auto path = std::filesystem::temp_directory_path() / "gino_roundtrip.obj";
  write_obj(path, m);
  const Mesh r = read_obj(path);
  CHECK(r.vertices == m.vertices);
  CHECK(r.faces == m.faces);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_obj("/nonexistent/nowhere.obj"), IoError);
}
