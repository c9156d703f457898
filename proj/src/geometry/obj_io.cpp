#include "gino/geometry.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace gino::geometry {

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (Index i = 0; i < mesh.num_vertices(); ++i)
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  for (Index f = 0; f < mesh.num_faces(); ++f)
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      verts.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        if (!(ss >> tok)) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": face needs 3 indices");
        idx = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      std::string extra;
      if (ss >> extra) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": only triangles are supported");
      tris.push_back(t);
    }
  }
  Points3 V(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(static_cast<Index>(i)) = verts[i];
  Faces F(static_cast<Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i)
    for (int c = 0; c < 3; ++c) F(static_cast<Index>(i), c) = tris[i][static_cast<std::size_t>(c)];
  return Mesh::from(std::move(V), std::move(F));
}

}  // namespace gino::geometry
