#include "gino/dataset.hpp"

#include "gino/container.hpp"
#include "gino/random.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace gino::data {

namespace fs = std::filesystem;
using nlohmann::json;

json Manifest::to_json() const {
  json j;
  j["version"] = version;
  j["generator_seed"] = seed;
  j["target_vertices"] = target_vertices;
  j["samples"] = json::array();
  for (const auto& e : samples) {
    json p;
    const auto v = e.params.as_vector();
    for (std::size_t i = 0; i < v.size(); ++i) p[geometry::AhmedParams::bounds()[i].name] = v[i];
    j["samples"].push_back(
        {{"id", e.id}, {"params", p}, {"mesh", e.mesh_path}, {"field", e.field_path}, {"velocity", e.velocity}, {"split", e.split}});
  }
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) throw ValidationError("unsupported manifest version " + std::to_string(m.version));
    m.seed = j.at("generator_seed").get<std::uint64_t>();
    m.target_vertices = j.value("target_vertices", Index{2000});
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      std::vector<double> v;
      for (const auto& b : geometry::AhmedParams::bounds()) v.push_back(s.at("params").at(b.name).get<double>());
      e.params = geometry::AhmedParams::from_vector(v);
      e.mesh_path = s.at("mesh").get<std::string>();
      e.field_path = s.at("field").get<std::string>();
      e.velocity = s.at("velocity").get<double>();
      e.split = s.at("split").get<std::string>();
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : samples) {
    if (!seen.insert(e.id).second) throw ValidationError("duplicate sample id '" + e.id + "' in manifest");
    if (e.split != "train" && e.split != "valid") throw ValidationError("sample '" + e.id + "' has unknown split '" + e.split + "'");
    e.params.validate();
  }
}

Eigen::MatrixXd latin_hypercube(Index n, Index dims, std::mt19937_64& rng) {
  if (n < 1) throw ValidationError("latin hypercube needs at least one sample");
  Eigen::MatrixXd out(n, dims);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index d = 0; d < dims; ++d) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + unit(rng)) / static_cast<double>(n);
      out(i, d) = std::min(u, std::nextafter(1.0, 0.0));
    }
  }
  return out;
}

std::vector<geometry::AhmedParams> scale_to_bounds(const Eigen::MatrixXd& unit) {
  const auto& b = geometry::AhmedParams::bounds();
  if (unit.cols() != static_cast<Index>(b.size())) throw DimensionError("scale_to_bounds: expected 7 columns");
  std::vector<geometry::AhmedParams> out;
  for (Index i = 0; i < unit.rows(); ++i) {
    std::vector<double> v;
    for (std::size_t d = 0; d < b.size(); ++d) v.push_back(b[d].lo + unit(i, static_cast<Index>(d)) * (b[d].hi - b[d].lo));
    out.push_back(geometry::AhmedParams::from_vector(v));
  }
  return out;
}

std::vector<Index> strata(const Eigen::VectorXd& unit_column) {
  const Index n = unit_column.size();
  std::vector<Index> s(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = static_cast<Index>(std::floor(unit_column[i] * static_cast<double>(n)));
  return s;
}

std::vector<std::string> split_labels(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto rng = make_stream(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  Index valid = n >= 2 ? std::max<Index>(1, static_cast<Index>(std::llround(0.2 * static_cast<double>(n)))) : 0;
  std::vector<std::string> labels(static_cast<std::size_t>(n), "train");
  for (Index i = 0; i < valid; ++i) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = "valid";
  return labels;
}

std::vector<Index> Dataset::indices(const std::string& split) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(static_cast<Index>(i));
  return out;
}

const Sample& Dataset::by_id(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw ValidationError("no sample '" + id + "' in dataset " + root.string());
}

void write_field(const fs::path& path, const geometry::SurfaceField& field, const std::string& id, double velocity) {
  io::Archive a;
  a.meta = {{"kind", "surface_field"}, {"id", id}, {"velocity", velocity}};
  a.put_vector("pressure", field.pressure);
  a.put_vector("shear", field.shear);
  a.save(path);
}

geometry::SurfaceField read_field(const fs::path& path) {
  const io::Archive a = io::Archive::load(path);
  geometry::SurfaceField f;
  f.pressure = a.get_vector("pressure");
  f.shear = a.get_vector("shear");
  if (f.pressure.size() != f.shear.size()) throw IoError(path.string() + ": pressure and shear lengths differ");
  return f;
}

Sample build_sample(const ManifestEntry& e, Index target_vertices) {
  Sample s;
  s.id = e.id;
  s.params = e.params;
  s.velocity = e.velocity;
  s.split = e.split;
  geometry::AhmedMeshOptions opt;
  opt.target_vertices = target_vertices;
  s.mesh = geometry::generate_ahmed_like(e.params, opt);
  s.weights = geometry::quadrature_weights(s.mesh);
  s.field = geometry::oracle_field(s.mesh, e.velocity);
  return s;
}

Manifest generate_dataset(const fs::path& out_dir, const GenerateOptions& opt) {
  if (opt.count < 1) throw ValidationError("gen-data: count must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir / "meshes", ec);
  if (!ec) fs::create_directories(out_dir / "fields", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto rng = make_stream(opt.seed, "datagen");
  const auto params = scale_to_bounds(latin_hypercube(opt.count, 7, rng));
  const auto labels = split_labels(opt.count, opt.seed);

  Manifest m;
  m.seed = opt.seed;
  m.target_vertices = opt.target_vertices;
  char buf[32];
  for (Index i = 0; i < opt.count; ++i) {
    std::snprintf(buf, sizeof buf, "sample_%04lld", static_cast<long long>(i));
    ManifestEntry e;
    e.id = buf;
    e.params = params[static_cast<std::size_t>(i)];
    e.velocity = e.params.inlet_velocity;
    e.mesh_path = "meshes/" + e.id + ".obj";
    e.field_path = "fields/" + e.id + ".field";
    e.split = labels[static_cast<std::size_t>(i)];
    const Sample s = build_sample(e, opt.target_vertices);
    geometry::write_obj(out_dir / e.mesh_path, s.mesh);
    write_field(out_dir / e.field_path, s.field, e.id, e.velocity);
    m.samples.push_back(std::move(e));
  }
  const fs::path mpath = out_dir / "manifest.json";
  std::ofstream out(mpath, std::ios::trunc);
  if (!out) throw IoError("cannot write " + mpath.string());
  out << m.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + mpath.string());
  return m;
}

Dataset load_dataset(const fs::path& path) {
  fs::path mpath = fs::is_directory(path) ? path / "manifest.json" : path;
  if (!fs::exists(mpath)) throw IoError("dataset not found: " + mpath.string());
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open " + mpath.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": " + e.what());
  }
  Dataset d;
  d.manifest = Manifest::from_json(j);
  d.root = mpath.parent_path();
  for (const auto& e : d.manifest.samples) {
    Sample s;
    s.id = e.id;
    s.params = e.params;
    s.velocity = e.velocity;
    s.split = e.split;
    const fs::path mesh_file = d.root / e.mesh_path, field_file = d.root / e.field_path;
    if (!fs::exists(mesh_file)) throw IoError("missing mesh file " + mesh_file.string());
    if (!fs::exists(field_file)) throw IoError("missing field file " + field_file.string());
    s.mesh = geometry::read_obj(mesh_file);
    s.weights = geometry::quadrature_weights(s.mesh);
    s.field = read_field(field_file);
    if (s.field.size() != s.mesh.num_vertices())
      throw ValidationError("sample '" + e.id + "': field has " + std::to_string(s.field.size()) + " values for " +
                            std::to_string(s.mesh.num_vertices()) + " vertices");
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace gino::data
