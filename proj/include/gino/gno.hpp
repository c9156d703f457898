#pragma once

// Local kernel integration between an irregular point cloud and the latent grid.
//
//   encode: v(x_g) = s * sum_{y_i in B_r(x_g)} k(x_g, y_i[, mu_i]) [f(y_i)] mu_i
//   decode: u(x_q) = s * sum_{x_g in B_r(x_q)} k(x_q, x_g) v(x_g) h^3,  h = 2 / (S - 1)
//
// s is an optional fixed normalization (1 by default).

#include "gino/geometry.hpp"
#include "gino/neighbors.hpp"
#include "gino/ops.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gino::gno {

/// Regular S^3 node grid over D = [-1, 1]^3.
struct LatentGrid {
  Index resolution = 64;

  Index num_nodes() const { return resolution * resolution * resolution; }
  double spacing() const { return 2.0 / static_cast<double>(resolution - 1); }
  /// Riemann weight of one node: the volume of one grid cell.
  double node_weight() const { return std::pow(spacing(), 3); }
  Points3 nodes() const { return geometry::grid_nodes(resolution); }
};

/// [sin(2 pi B x); cos(2 pi B x)] for each row x; B is [k, d].
template <typename Scalar, typename Derived>
Tensor<Scalar> fourier_features(const Eigen::MatrixBase<Derived>& x, const Tensor<Scalar>& freq) {
  if (freq.rank() != 2 || freq.dim(1) != x.cols())
    throw DimensionError("fourier_features: frequencies " + shape_string(freq.shape()) + " for " + std::to_string(x.cols()) + "-d input");
  const Index n = x.rows(), k = freq.dim(0), d = freq.dim(1);
  Tensor<Scalar> out({n, 2 * k});
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < k; ++j) {
      double phase = 0;
      for (Index a = 0; a < d; ++a) phase += static_cast<double>(freq[j * d + a]) * static_cast<double>(x(r, a));
      phase *= 2 * M_PI;
      out[r * 2 * k + j] = static_cast<Scalar>(std::sin(phase));
      out[r * 2 * k + k + j] = static_cast<Scalar>(std::cos(phase));
    }
  return out;
}

/// One chunk of edges handed to a kernel: edge e joins local query row `query[e]` of
/// `queries` with global source index `source[e]`.
struct EdgeChunk {
  const Points3& queries;
  std::span<const Index> query;
  std::span<const Index> source;
};

/// Produces kernel values [E, out_dim] for a chunk of edges.
template <typename Scalar>
using EdgeKernel = std::function<Var<Scalar>(Tape<Scalar>&, const EdgeChunk&)>;

struct KernelSpec {
  Index coord_dim = 3;
  Index num_frequencies = 16;
  double frequency_scale = 1.0;
  std::vector<Index> hidden{64, 64};
  Index out_dim = 1;
  /// Feed the source quadrature weight to the kernel as an extra input.
  bool weighted = false;
  Activation activation = Activation::gelu;
  /// Extra factor on the initial output layer, e.g. 1/sqrt(c_in) for matrix kernels.
  double output_gain = 1.0;
};

/// MLP on [features(x) ; features(y) ; mu]. The first layer is stored split by input block
/// so source-side products are formed once per call instead of once per edge.
template <typename Scalar>
class KernelMlp {
 public:
  KernelMlp() = default;
  KernelMlp(std::string prefix, KernelSpec spec) : prefix_(std::move(prefix)), spec_(std::move(spec)) {
    if (spec_.hidden.empty()) throw ValidationError("kernel MLP needs at least one hidden layer");
  }

  const KernelSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  std::string name(const std::string& leaf) const { return prefix_ + "." + leaf; }

  void init(ParameterSet<Scalar>& params, ParameterSet<Scalar>& buffers, std::mt19937_64& rng) const {
    const Index k = spec_.num_frequencies, f = 2 * k, h0 = spec_.hidden.front();
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor<Scalar> freq({k, spec_.coord_dim});
    for (Index i = 0; i < freq.size(); ++i) freq[i] = static_cast<Scalar>(spec_.frequency_scale * normal(rng));
    buffers[name("freq")] = freq;
    const Index fan0 = 2 * f + (spec_.weighted ? 1 : 0);
    params[name("w0_query")] = random_matrix(h0, f, fan0, 1.0, rng);
    params[name("w0_source")] = random_matrix(h0, f, fan0, 1.0, rng);
    if (spec_.weighted) params[name("w0_weight")] = random_matrix(h0, 1, fan0, 1.0, rng);
    params[name("b0")] = Tensor<Scalar>({h0});
    Index prev = h0;
    const Index layers = static_cast<Index>(spec_.hidden.size());
    for (Index l = 1; l <= layers; ++l) {
      const bool last = l == layers;
      const Index width = last ? spec_.out_dim : spec_.hidden[static_cast<std::size_t>(l)];
      params[name("w" + std::to_string(l))] = random_matrix(width, prev, prev, last ? spec_.output_gain : 1.0, rng);
      params[name("b" + std::to_string(l))] = Tensor<Scalar>({width});
      prev = width;
    }
  }

  /// Kernel bound to a tape over fixed sources. `weights` (one per source) is required
  /// for the weighted variant.
  EdgeKernel<Scalar> bind(const Bound<Scalar>& p, const ParameterSet<Scalar>& buffers, const Points3& sources,
                          const Tensor<Scalar>* weights = nullptr) const {
    if (spec_.weighted && (!weights || weights->size() != sources.rows()))
      throw ContractError("weighted kernel needs one weight per source");
    const Tensor<Scalar>& freq = buffers.at(name("freq"));
    Tape<Scalar>& tape = p.tape();
    // source-side first-layer pre-activation, shared by every chunk
    Var<Scalar> src = linear(tape.constant(fourier_features<Scalar>(sources, freq)), p[name("w0_source")], p[name("b0")]);
    return [this, &p, freq, src, weights](Tape<Scalar>& t, const EdgeChunk& chunk) {
      Var<Scalar> q = linear(t.constant(fourier_features<Scalar>(chunk.queries, freq)), p[name("w0_query")]);
      Var<Scalar> h = add(gather_rows(q, chunk.query), gather_rows(src, chunk.source));
      if (spec_.weighted) {
        Tensor<Scalar> mu({static_cast<Index>(chunk.source.size()), 1});
        for (std::size_t e = 0; e < chunk.source.size(); ++e) mu[static_cast<Index>(e)] = (*weights)[chunk.source[e]];
        h = add(h, linear(t.constant(std::move(mu)), p[name("w0_weight")]));
      }
      h = activation(h, spec_.activation);
      const Index layers = static_cast<Index>(spec_.hidden.size());
      for (Index l = 1; l <= layers; ++l) {
        h = linear(h, p[name("w" + std::to_string(l))], p[name("b" + std::to_string(l))]);
        if (l < layers) h = activation(h, spec_.activation);
      }
      return h;
    };
  }

 private:
  static Tensor<Scalar> random_matrix(Index rows, Index cols, Index fan_in, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    Tensor<Scalar> w({rows, cols});
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(normal(rng));
    return w;
  }

  std::string prefix_;
  KernelSpec spec_;
};

/// `mlp` bound over only the sources referenced by `edges`; chunk indices are remapped, so
/// the kernel values equal those of a full bind.
template <typename Scalar>
EdgeKernel<Scalar> bind_used(const KernelMlp<Scalar>& mlp, const Bound<Scalar>& p, const ParameterSet<Scalar>& buffers,
                             const Points3& sources, const neighbors::EdgeList& edges, const Tensor<Scalar>* weights = nullptr) {
  std::vector<Index> used(edges.indices);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  auto local = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(sources.rows()), Index{-1});
  Points3 pts(static_cast<Index>(used.size()), 3);
  auto w = std::make_shared<Tensor<Scalar>>();
  if (weights) *w = Tensor<Scalar>({static_cast<Index>(used.size())});
  for (std::size_t i = 0; i < used.size(); ++i) {
    (*local)[static_cast<std::size_t>(used[i])] = static_cast<Index>(i);
    pts.row(static_cast<Index>(i)) = sources.row(used[i]);
    if (weights) (*w)[static_cast<Index>(i)] = (*weights)[used[i]];
  }
  EdgeKernel<Scalar> inner = mlp.bind(p, buffers, pts, weights ? w.get() : nullptr);
  return [inner, local, w](Tape<Scalar>& t, const EdgeChunk& chunk) {
    std::vector<Index> src(chunk.source.size());
    for (std::size_t e = 0; e < src.size(); ++e) src[e] = (*local)[static_cast<std::size_t>(chunk.source[e])];
    return inner(t, EdgeChunk{chunk.queries, chunk.query, src});
  };
}

struct GnoStats {
  Index queries = 0;
  Index edges = 0;
  Index empty_queries = 0;
};

namespace detail {

inline void check_edges(const neighbors::EdgeList& edges, Index queries, Index sources, double radius, const char* who) {
  if (edges.num_queries != queries || edges.num_sources != sources)
    throw ContractError(std::string(who) + ": edge list is for " + std::to_string(edges.num_queries) + " queries / " +
                        std::to_string(edges.num_sources) + " sources, expected " + std::to_string(queries) + " / " +
                        std::to_string(sources));
  if (edges.radius != radius)
    throw ContractError(std::string(who) + ": edge list radius " + std::to_string(edges.radius) + " differs from " + std::to_string(radius));
}

// Shared integration loop. With `values` ([N, c_in]) the kernel is a row-major
// [out_dim x c_in] matrix per edge, otherwise an out_dim vector. Each edge term is scaled
// by `edge_weight[source]` when given, and every query sum by `scale`.
template <typename Scalar>
Var<Scalar> integrate(Tape<Scalar>& tape, const Points3& queries, const neighbors::EdgeList& edges, const EdgeKernel<Scalar>& kernel,
                      const Var<Scalar>* values, const Tensor<Scalar>* edge_weight, Scalar scale, Index out_dim, Index batch_size,
                      GnoStats* stats) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  const Index nq = queries.rows();
  std::vector<Var<Scalar>> parts;
  for (Index q0 = 0; q0 < nq; q0 += batch_size) {
    const Index q1 = std::min(nq, q0 + batch_size);
    const Index e0 = edges.offsets[static_cast<std::size_t>(q0)], e1 = edges.offsets[static_cast<std::size_t>(q1)];
    std::vector<Index> local_query(static_cast<std::size_t>(e1 - e0));
    std::vector<Index> offsets;
    offsets.reserve(static_cast<std::size_t>(q1 - q0) + 1);
    for (Index q = q0; q < q1; ++q) {
      offsets.push_back(edges.offsets[static_cast<std::size_t>(q)] - e0);
      for (Index e = edges.offsets[static_cast<std::size_t>(q)]; e < edges.offsets[static_cast<std::size_t>(q) + 1]; ++e)
        local_query[static_cast<std::size_t>(e - e0)] = q - q0;
    }
    offsets.push_back(e1 - e0);
    const Points3 chunk_queries = queries.middleRows(q0, q1 - q0);
    const std::span<const Index> source(edges.indices.data() + e0, static_cast<std::size_t>(e1 - e0));
    const EdgeChunk chunk{chunk_queries, local_query, source};
    Var<Scalar> k = kernel(tape, chunk);
    const Index expect = values ? out_dim * values->dim(1) : out_dim;
    if (k.value().rank() != 2 || k.dim(0) != e1 - e0 || k.dim(1) != expect)
      throw DimensionError("kernel returned " + shape_string(k.shape()) + ", expected [" + std::to_string(e1 - e0) + "," + std::to_string(expect) + "]");
    Var<Scalar> terms = values ? batched_matvec(k, gather_rows(*values, source), out_dim) : k;
    if (edge_weight) {
      Tensor<Scalar> w({e1 - e0});
      for (Index e = 0; e < e1 - e0; ++e) w[e] = (*edge_weight)[source[static_cast<std::size_t>(e)]];
      terms = scale_rows(terms, w);
    }
    parts.push_back(segment_sum(terms, offsets, scale));
  }
  if (stats) {
    stats->queries = nq;
    stats->edges = edges.num_edges();
    stats->empty_queries = 0;
    for (Index q = 0; q < nq; ++q) stats->empty_queries += edges.degree(q) == 0;
  }
  if (parts.empty()) return tape.constant(Tensor<Scalar>({0, out_dim}));
  return parts.size() == 1 ? parts.front() : concat0(parts);
}

}  // namespace detail

struct EncodeOptions {
  double radius = 0.055;
  Index batch_size = 1 << 30;
  double scale = 1.0;
  /// Precomputed grid-node -> point neighbourhoods; built on the fly when null.
  const neighbors::EdgeList* edges = nullptr;
};

/// Point cloud -> latent grid. Returns [out_dim, S, S, S]. `values`, if given, is [N, c_in].
template <typename Scalar>
Var<Scalar> gno_encode(Tape<Scalar>& tape, const Points3& points, const Var<Scalar>* values, const Tensor<Scalar>& weights,
                       const LatentGrid& grid, const EdgeKernel<Scalar>& kernel, Index out_dim, const EncodeOptions& opt = {},
                       GnoStats* stats = nullptr) {
  if (weights.size() != points.rows()) throw DimensionError("gno_encode: one quadrature weight per point");
  if (values && (values->value().rank() != 2 || values->dim(0) != points.rows()))
    throw DimensionError("gno_encode: values must be [N, c]");
  const Points3 nodes = grid.nodes();
  neighbors::EdgeList built;
  if (!opt.edges) built = neighbors::radius_search(points, nodes, opt.radius);
  const neighbors::EdgeList& edges = opt.edges ? *opt.edges : built;
  detail::check_edges(edges, grid.num_nodes(), points.rows(), opt.radius, "gno_encode");
  Var<Scalar> rows = detail::integrate(tape, nodes, edges, kernel, values, &weights, static_cast<Scalar>(opt.scale), out_dim,
                                       opt.batch_size, stats);
  const Index S = grid.resolution;
  return reshape(transpose2d(rows), {out_dim, S, S, S});
}

struct DecodeOptions {
  double radius = 0.055;
  Index batch_size = 5000;
  double scale = 1.0;
  /// Precomputed query -> grid-node neighbourhoods; built on the fly when null.
  const neighbors::EdgeList* edges = nullptr;
};

/// Latent grid [c, S, S, S] -> values [Q, out_dim] at arbitrary query points.
template <typename Scalar>
Var<Scalar> gno_decode(Tape<Scalar>& tape, const Var<Scalar>& grid_values, const Points3& queries, const EdgeKernel<Scalar>& kernel,
                       Index out_dim, const DecodeOptions& opt = {}, GnoStats* stats = nullptr) {
  if (grid_values.value().rank() != 4 || grid_values.size() == 0) throw ContractError("gno_decode: grid is empty or not [c, S, S, S]");
  const Index c = grid_values.dim(0), S = grid_values.dim(1);
  if (grid_values.dim(2) != S || grid_values.dim(3) != S) throw DimensionError("gno_decode: grid must be cubic");
  const LatentGrid grid{S};
  neighbors::EdgeList built;
  if (!opt.edges) built = neighbors::radius_search(grid.nodes(), queries, opt.radius);
  const neighbors::EdgeList& edges = opt.edges ? *opt.edges : built;
  detail::check_edges(edges, queries.rows(), grid.num_nodes(), opt.radius, "gno_decode");
  const Var<Scalar> rows = transpose2d(reshape(grid_values, {c, grid.num_nodes()}));
  return detail::integrate(tape, queries, edges, kernel, &rows, static_cast<const Tensor<Scalar>*>(nullptr),
                           static_cast<Scalar>(opt.scale * grid.node_weight()), out_dim, opt.batch_size, stats);
}

}  // namespace gino::gno
