#pragma once

#include "gino/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace gino {

using Vec3 = Eigen::Vector3d;
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

namespace geometry {

/// Indexed triangle surface with per-face unit normals and areas.
struct Mesh {
  Points3 vertices;
  Faces faces;
  Points3 normals;
  Eigen::VectorXd areas;

  /// Validates indices and face areas and fills normals/areas.
  static Mesh from(Points3 vertices, Faces faces);

  Index num_vertices() const { return vertices.rows(); }
  Index num_faces() const { return faces.rows(); }
  double total_area() const { return areas.sum(); }
  /// sum_f area_f * n_f; zero for a closed surface.
  Vec3 area_normal_sum() const;
  /// Every undirected edge is shared by exactly two faces with opposite orientation.
  bool is_watertight() const;
  /// Area-weighted average of incident face normals, normalized.
  Points3 vertex_normals() const;
  double signed_volume() const;
  Vec3 bbox_min() const { return vertices.colwise().minCoeff(); }
  Vec3 bbox_max() const { return vertices.colwise().maxCoeff(); }
};

/// Subdivided icosahedron projected onto a sphere; 20 * 4^subdivisions faces.
Mesh icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());

/// Axis-aligned box [lo, hi] with `n` subdivisions per edge.
Mesh box(const Vec3& lo, const Vec3& hi, int n = 1);

// ---------------------------------------------------------------------------
// Ahmed-like parametric bodies

/// Design parameters in millimetres / degrees / metres per second.
struct AhmedParams {
  double length = 1044;
  double width = 389;
  double height = 288;
  double ground_clearance = 50;
  double slant_angle = 25;
  double fillet_radius = 100;
  double inlet_velocity = 40;

  struct Bound {
    const char* name;
    double lo, hi;
  };
  static const std::vector<Bound>& bounds();
  /// Throws ValidationError naming every out-of-range field.
  void validate() const;
  static AhmedParams midpoint();
  std::vector<double> as_vector() const;
  static AhmedParams from_vector(const std::vector<double>& v);
};

struct AhmedMeshOptions {
  /// Approximate vertex count of the generated surface.
  Index target_vertices = 2000;
  /// Largest normalized extent; the body lives in [-extent, extent]^3.
  double normalized_extent = 0.9;
};

/// Watertight box body with a rear slant, raised by the ground clearance, front top
/// and bottom edges cut by 45-degree chamfers; rescaled into D = [-1, 1]^3.
Mesh generate_ahmed_like(const AhmedParams& params, const AhmedMeshOptions& options = {});

// ---------------------------------------------------------------------------
// Signed distance

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Bounding-volume hierarchy over a mesh for exact distance and ray-parity queries.
/// Sign convention: negative inside.
class SdfEvaluator {
 public:
  explicit SdfEvaluator(const Mesh& mesh);
  ~SdfEvaluator();
  SdfEvaluator(SdfEvaluator&&) noexcept;
  SdfEvaluator& operator=(SdfEvaluator&&) noexcept;

  double unsigned_distance(const Vec3& p) const;
  /// Majority vote over three fixed ray directions.
  bool inside(const Vec3& p) const;
  /// Throws ContractError if the mesh is not watertight.
  double signed_distance(const Vec3& p) const;
  bool watertight() const { return watertight_; }

 private:
  struct Bvh;
  std::unique_ptr<Bvh> bvh_;
  bool watertight_ = false;
};

/// Signed (or, with `signed_result=false`, unsigned) distance for each row of `points`.
Eigen::VectorXd sdf_eval(const Mesh& mesh, const Points3& points, bool signed_result = true);

/// Reference implementation looping over all triangles; unsigned.
Eigen::VectorXd brute_force_distance(const Mesh& mesh, const Points3& points);

/// Regular node grid over D = [-1, 1]^3 with S nodes per axis, values ordered [ix][iy][iz].
struct SdfGrid {
  Index resolution = 0;
  Vec3 origin = Vec3::Constant(-1.0);
  double spacing = 0;
  Eigen::VectorXd values;

  double at(Index i, Index j, Index k) const { return values[(i * resolution + j) * resolution + k]; }
  /// Trilinear interpolation, clamped to the grid.
  double interpolate(const Vec3& p) const;
};

/// Coordinates of the S^3 nodes of D = [-1, 1]^3, node (i, j, k) at row (i*S + j)*S + k.
Points3 grid_nodes(Index resolution);

SdfGrid rasterize_sdf(const Mesh& mesh, Index resolution);

// ---------------------------------------------------------------------------
// Surface quadrature, sampling, fields and drag

/// One third of the incident face areas at each vertex.
Eigen::VectorXd quadrature_weights(const Mesh& mesh);

struct PointSample {
  std::vector<Index> indices;  // ascending vertex indices
  Points3 points;
  Eigen::VectorXd weights;  // quadrature weights scaled by the rate
};

/// Uniform selection of ceil(N/rate) vertices without replacement.
PointSample subsample_mesh(const Mesh& mesh, Index rate, std::uint64_t seed);

/// Per-vertex pressure and x-component of wall shear stress.
struct SurfaceField {
  Eigen::VectorXd pressure;
  Eigen::VectorXd shear;
  Index size() const { return pressure.size(); }
};

/// Inflow direction used throughout: flow arrives along (-1, 0, 0).
inline Vec3 inlet_direction() { return Vec3(-1.0, 0.0, 0.0); }

/// Front stagnation reference: the front-most bounding-box face centre.
Vec3 front_point(const Mesh& mesh);

/// Manufactured target: p = v^2 (n.i) exp(-|x - x_front|), shear = 0.05 v^2 (1 - (n.i)^2).
SurfaceField oracle_field(const Mesh& mesh, double inlet_velocity);

/// Area of the bounding rectangle of the mesh projected onto the plane normal to `direction`.
double frontal_area(const Mesh& mesh, const Vec3& direction = inlet_direction());

struct DragReport {
  double coefficient = 0;
  double pressure_term = 0;  // integral of p (n.i), before the 2/(v^2 A) factor
  double shear_term = 0;     // integral of T_w.i, before the factor
};

/// Drag coefficient with face values averaged from vertices.
DragReport drag_coefficient(const Mesh& mesh, const SurfaceField& field, double inlet_velocity, double area,
                            const Vec3& direction = inlet_direction());

/// Per-vertex coefficients (a, b) with c_d = a.p + b.shear; the linear form behind drag_coefficient.
struct DragFunctional {
  Eigen::VectorXd pressure;
  Eigen::VectorXd shear;
};
DragFunctional drag_functional(const Mesh& mesh, double inlet_velocity, double area,
                               const Vec3& direction = inlet_direction());

// ---------------------------------------------------------------------------
// Wavefront OBJ subset: `v x y z` and triangular `f i j k` lines.

void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_obj(const std::filesystem::path& path);

}  // namespace geometry
}  // namespace gino
