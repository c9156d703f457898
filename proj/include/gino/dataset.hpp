#pragma once

#include "gino/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace gino::data {

inline constexpr int kManifestVersion = 1;

/// One row of the manifest. Paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  geometry::AhmedParams params;
  std::string mesh_path;
  std::string field_path;
  double velocity = 0;
  std::string split;  // "train" or "valid"
};

struct Manifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  Index target_vertices = 2000;
  std::vector<ManifestEntry> samples;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  /// Throws ValidationError on duplicate ids or unknown split labels.
  void validate() const;
};

/// Latin hypercube over the unit cube: column d is a random permutation of the n strata,
/// jittered uniformly inside each stratum. Rows are samples.
Eigen::MatrixXd latin_hypercube(Index n, Index dims, std::mt19937_64& rng);

/// Maps unit-cube rows onto the Ahmed design bounds.
std::vector<geometry::AhmedParams> scale_to_bounds(const Eigen::MatrixXd& unit);

/// Stratum index floor(n * u) of each value; used to check stratification.
std::vector<Index> strata(const Eigen::VectorXd& unit_column);

/// Seeded 80/20 assignment by shuffled sample index; at least one validation sample when n >= 2.
std::vector<std::string> split_labels(Index n, std::uint64_t seed);

struct Sample {
  std::string id;
  geometry::AhmedParams params;
  geometry::Mesh mesh;
  Eigen::VectorXd weights;  // surface quadrature weights
  double velocity = 0;
  geometry::SurfaceField field;
  std::string split;
};

struct Dataset {
  Manifest manifest;
  std::filesystem::path root;
  std::vector<Sample> samples;

  std::vector<Index> indices(const std::string& split) const;
  const Sample& by_id(const std::string& id) const;
};

struct GenerateOptions {
  Index count = 1;
  std::uint64_t seed = 0;
  Index target_vertices = 2000;
};

/// Writes meshes/, fields/ and manifest.json under `out_dir` and returns the manifest.
Manifest generate_dataset(const std::filesystem::path& out_dir, const GenerateOptions& opt);

/// The sample for one manifest entry, built in memory.
Sample build_sample(const ManifestEntry& e, Index target_vertices);

void write_field(const std::filesystem::path& path, const geometry::SurfaceField& field, const std::string& id, double velocity);
geometry::SurfaceField read_field(const std::filesystem::path& path);

/// `path` may be the manifest file or the directory holding manifest.json.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace gino::data
