#include "gino/neighbors.hpp"

#include <algorithm>
#include <cmath>

namespace gino::neighbors {

std::vector<Index> EdgeList::query_of_edge() const {
  std::vector<Index> rows(indices.size());
  for (Index q = 0; q < num_queries; ++q)
    std::fill(rows.begin() + offsets[static_cast<std::size_t>(q)], rows.begin() + offsets[static_cast<std::size_t>(q) + 1], q);
  return rows;
}

EdgeList select_queries(const EdgeList& edges, const std::vector<Index>& queries) {
  EdgeList out;
  out.num_queries = static_cast<Index>(queries.size());
  out.num_sources = edges.num_sources;
  out.radius = edges.radius;
  out.offsets.reserve(queries.size() + 1);
  for (Index q : queries) {
    if (q < 0 || q >= edges.num_queries) throw ContractError("select_queries: row out of range");
    out.indices.insert(out.indices.end(), edges.indices.begin() + edges.offsets[static_cast<std::size_t>(q)],
                       edges.indices.begin() + edges.offsets[static_cast<std::size_t>(q) + 1]);
    out.offsets.push_back(static_cast<Index>(out.indices.size()));
  }
  return out;
}

HashGrid::HashGrid(const Points3& points, double cell_size) : points_(points), cell_size_(cell_size) {
  if (!(cell_size > 0) || !std::isfinite(cell_size)) throw ValidationError("hash grid cell size must be positive and finite");
  if (!points.allFinite()) throw ValidationError("hash grid points must be finite");
  const Index n = points.rows();
  // counting sort by cell, stable in the point index
  std::vector<Run*> slot(static_cast<std::size_t>(n));
  cells_.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Run& r = cells_[cell_of(points.row(i))];
    ++r.end;
    slot[static_cast<std::size_t>(i)] = &r;
  }
  // runs laid out in key order, so cells adjacent along the last axis are adjacent in memory
  std::vector<std::pair<CellKey, Run*>> keyed;
  keyed.reserve(cells_.size());
  for (auto& [key, r] : cells_) keyed.emplace_back(key, &r);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Index start = 0;
  for (auto& [key, r] : keyed) {
    const Index count = r->end;
    r->begin = r->end = start;
    start += count;
  }
  order_.resize(static_cast<std::size_t>(n));
  sorted_.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    Run& r = *slot[static_cast<std::size_t>(i)];
    order_[static_cast<std::size_t>(r.end)] = i;
    sorted_.row(r.end) = points.row(i);
    ++r.end;
  }
}

CellKey HashGrid::cell_of(const Vec3& x) const {
  return {static_cast<std::int64_t>(std::floor(x.x() / cell_size_)), static_cast<std::int64_t>(std::floor(x.y() / cell_size_)),
          static_cast<std::int64_t>(std::floor(x.z() / cell_size_))};
}

std::span<const Index> HashGrid::bucket(const CellKey& key) const {
  auto it = cells_.find(key);
  if (it == cells_.end()) return {};
  return {order_.data() + it->second.begin, static_cast<std::size_t>(it->second.end - it->second.begin)};
}

EdgeList HashGrid::radius_query(const Points3& queries, double r) const {
  if (r != cell_size_) throw ContractError("radius_query: r must equal the grid cell size");
  const Index nq = queries.rows();
  EdgeList out;
  out.num_queries = nq;
  out.num_sources = points_.rows();
  out.radius = r;

  // Visit queries cell by cell so neighbouring lookups hit warm cache lines.
  std::vector<std::pair<CellKey, Index>> visit(static_cast<std::size_t>(nq));
  for (Index q = 0; q < nq; ++q) visit[static_cast<std::size_t>(q)] = {cell_of(queries.row(q)), q};
  std::sort(visit.begin(), visit.end());

  std::vector<Index> found, count(static_cast<std::size_t>(nq), 0), first(static_cast<std::size_t>(nq), 0);
  found.reserve(static_cast<std::size_t>(nq) * 8);
  for (const auto& [key, q] : visit) {
    const Vec3 x = queries.row(q);
    // Cells touched by the box [x - r, x + r]. Rounding is monotone, so any y with
    // |x - y|_inf <= r lands inside this range; it spans at most 3 cells per axis.
    const CellKey lo = cell_of((x.array() - r).matrix());
    const CellKey hi = cell_of((x.array() + r).matrix());
    const auto mark = static_cast<Index>(found.size());
    for (std::int64_t i = lo[0]; i <= hi[0]; ++i)
      for (std::int64_t j = lo[1]; j <= hi[1]; ++j)
        for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
          auto it = cells_.find({i, j, k});
          if (it == cells_.end()) continue;
          for (Index s = it->second.begin; s < it->second.end; ++s)
            if (within_radius(x, sorted_.row(s), r)) found.push_back(order_[static_cast<std::size_t>(s)]);
        }
    std::sort(found.begin() + mark, found.end());
    first[static_cast<std::size_t>(q)] = mark;
    count[static_cast<std::size_t>(q)] = static_cast<Index>(found.size()) - mark;
  }

  out.offsets.resize(static_cast<std::size_t>(nq) + 1);
  out.offsets[0] = 0;
  for (Index q = 0; q < nq; ++q) out.offsets[static_cast<std::size_t>(q) + 1] = out.offsets[static_cast<std::size_t>(q)] + count[static_cast<std::size_t>(q)];
  out.indices.resize(found.size());
  for (Index q = 0; q < nq; ++q)
    std::copy_n(found.begin() + first[static_cast<std::size_t>(q)], count[static_cast<std::size_t>(q)],
                out.indices.begin() + out.offsets[static_cast<std::size_t>(q)]);
  return out;
}

EdgeList brute_force_radius(const Points3& points, const Points3& queries, double r) {
  EdgeList out;
  out.num_queries = queries.rows();
  out.num_sources = points.rows();
  out.radius = r;
  for (Index q = 0; q < queries.rows(); ++q) {
    const Vec3 x = queries.row(q);
    for (Index p = 0; p < points.rows(); ++p)
      if (within_radius(x, points.row(p), r)) out.indices.push_back(p);
    out.offsets.push_back(static_cast<Index>(out.indices.size()));
  }
  return out;
}

EdgeList radius_search(const Points3& points, const Points3& queries, double r) {
  return HashGrid(points, r).radius_query(queries, r);
}

}  // namespace gino::neighbors
