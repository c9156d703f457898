#pragma once

#include "gino/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace gino::neighbors {

/// Compressed sparse rows: neighbors of query q are indices[offsets[q] .. offsets[q+1]).
struct EdgeList {
  std::vector<Index> offsets{0};
  std::vector<Index> indices;
  Index num_queries = 0;
  Index num_sources = 0;
  double radius = 0;  // search radius the list was built with

  Index num_edges() const { return static_cast<Index>(indices.size()); }
  Index degree(Index q) const { return offsets[static_cast<std::size_t>(q) + 1] - offsets[static_cast<std::size_t>(q)]; }
  /// Row index of every edge, expanded from the offsets.
  std::vector<Index> query_of_edge() const;
  bool operator==(const EdgeList&) const = default;
};

/// Rows `queries` of `edges`, in the given order, as a new list over the same sources.
EdgeList select_queries(const EdgeList& edges, const std::vector<Index>& queries);

/// Membership test shared by every search path: an l-infinity prefilter then |q - y|^2 <= r^2.
inline bool within_radius(const Vec3& q, const Vec3& y, double r) {
  const Vec3 d = q - y;
  if (d.cwiseAbs().maxCoeff() > r) return false;
  return d.squaredNorm() <= r * r;
}

using CellKey = std::array<std::int64_t, 3>;

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return static_cast<std::size_t>((static_cast<std::uint64_t>(k[0]) * 73856093ULL) ^
                                    (static_cast<std::uint64_t>(k[1]) * 19349663ULL) ^
                                    (static_cast<std::uint64_t>(k[2]) * 83492791ULL));
  }
};

/// Uniform voxel hash with cells of edge r. Point indices are stored grouped by cell, so a
/// bucket is one contiguous run. Immutable after construction.
class HashGrid {
 public:
  HashGrid(const Points3& points, double cell_size);

  double cell_size() const { return cell_size_; }
  Index num_points() const { return points_.rows(); }
  std::size_t num_cells() const { return cells_.size(); }
  CellKey cell_of(const Vec3& x) const;
  /// Point indices in a cell, ascending; empty if unoccupied.
  std::span<const Index> bucket(const CellKey& key) const;
  const Points3& points() const { return points_; }

  /// Neighbors within r of each query row. `r` must equal the cell size.
  EdgeList radius_query(const Points3& queries, double r) const;

 private:
  struct Run {
    Index begin = 0, end = 0;
  };

  Points3 points_;
  double cell_size_;
  std::vector<Index> order_;  // point indices, grouped by cell
  Points3 sorted_;            // points_ rows in `order_` sequence
  std::unordered_map<CellKey, Run, CellKeyHash> cells_;
};

/// Exhaustive O(NQ) reference with the same membership test and ordering.
EdgeList brute_force_radius(const Points3& points, const Points3& queries, double r);

/// Convenience: build a grid over `points` and query it.
EdgeList radius_search(const Points3& points, const Points3& queries, double r);

}  // namespace gino::neighbors
