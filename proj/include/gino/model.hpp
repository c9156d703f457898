#pragma once

// Full pipeline: lift P -> L FNO blocks -> GNO decode at surface vertices -> projection Q.
// The encoder-decoder variant prepends a GNO encode of the surface point cloud whose
// output is concatenated with the [sdf, x, y, z] grid channels before P.

#include "gino/dataset.hpp"
#include "gino/fno.hpp"
#include "gino/gno.hpp"
#include "gino/random.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gino::model {

enum class Variant { encoder_decoder, decoder_only };

std::string variant_name(Variant v);

/// Config validation failure; `keys` lists every offending key.
class SchemaError : public ValidationError {
 public:
  SchemaError(const std::string& what, std::vector<std::string> keys) : ValidationError(what), keys(std::move(keys)) {}
  std::vector<std::string> keys;
};

struct GinoConfig {
  Variant variant = Variant::decoder_only;
  Index latent_resolution = 32;
  Index channels = 16;
  Index layers = 4;
  fno::Modes modes{8, 8, 8};
  std::optional<double> r_in;
  double r_out = 0.055;
  Index encoder_channels = 8;
  Index decoder_channels = 8;
  std::vector<Index> kernel_hidden{32, 32};
  Index kernel_frequencies = 16;
  fno::Norm norm = fno::Norm::adaptive;
  Activation activation = Activation::gelu;

  double lr = 2.5e-4;
  Index halve_at_epoch = 50;
  Index epochs = 100;
  Index batch_size = 1;
  double pressure_weight = 1.0;
  double shear_weight = 1.0;
  double drag_weight = 1.0;
  /// Random vertices per sample and step; 0 uses every vertex.
  Index train_queries = 0;
  /// Surface subsampling rate of the training inputs and targets.
  Index train_rate = 1;
  Index decode_batch = 5000;
  std::uint64_t seed = 0;

  /// Throws SchemaError naming every offending key.
  void validate() const;
  /// Every field, defaults included.
  nlohmann::json to_json() const;
  /// Physics keys (variant, latent_resolution, modes, r_out and, for the encoder variant,
  /// r_in) are required; unknown keys are rejected.
  static GinoConfig from_json(const nlohmann::json& j);
  static GinoConfig load(const std::filesystem::path& path);
};

/// Per-channel z-score statistics of (pressure, shear) over the training split.
struct Normalizer {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> stdev{1.0, 1.0};

  static Normalizer fit(const std::vector<const data::Sample*>& samples);
  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

/// Per-sample model inputs and targets, precomputed once per (config, rate).
template <typename Scalar>
struct Prepared {
  std::string id;
  double velocity = 0;
  Points3 vertices;
  Tensor<Scalar> grid_input;  // [4, S, S, S]: sdf, x, y, z
  neighbors::EdgeList decode_edges;  // every vertex -> grid nodes within r_out
  // encoder inputs, drawn at the sampling rate
  Points3 enc_points;
  Tensor<Scalar> enc_weights;
  neighbors::EdgeList enc_edges;
  std::vector<Index> rate_indices;  // vertices kept at the sampling rate
  Eigen::MatrixX2d target;  // raw (pressure, shear)
  Tensor<Scalar> target_norm;  // [N, 2]
  Eigen::MatrixX2d drag_coeffs;  // c_d = sum_i drag_coeffs(i, .) . target(i, .)
  double drag_true = 0;

  Index num_vertices() const { return vertices.rows(); }
};

/// Input grid [sdf, x, y, z] of one mesh at resolution S.
template <typename Scalar>
Tensor<Scalar> grid_input(const geometry::Mesh& mesh, Index S) {
  const geometry::SdfGrid sdf = geometry::rasterize_sdf(mesh, S);
  const Points3 nodes = geometry::grid_nodes(S);
  const Index n = S * S * S;
  Tensor<Scalar> g({4, S, S, S});
  for (Index i = 0; i < n; ++i) {
    g[i] = static_cast<Scalar>(sdf.values[i]);
    for (Index a = 0; a < 3; ++a) g[(a + 1) * n + i] = static_cast<Scalar>(nodes(i, a));
  }
  return g;
}

/// `grid` may be passed to reuse a rasterized input grid.
template <typename Scalar>
Prepared<Scalar> prepare(const data::Sample& s, const GinoConfig& cfg, const Normalizer& norm, Index rate, std::uint64_t seed,
                         const Tensor<Scalar>* grid = nullptr) {
  const Index n = s.mesh.num_vertices();
  if (s.field.size() != n || s.weights.size() != n)
    throw ContractError("sample '" + s.id + "': field/weights do not match " + std::to_string(n) + " vertices");
  const Index S = cfg.latent_resolution;
  Prepared<Scalar> p;
  p.id = s.id;
  p.velocity = s.velocity;
  p.vertices = s.mesh.vertices;
  if (grid) {
    if (grid->rank() != 4 || grid->dim(0) != 4 || grid->dim(1) != S) throw ContractError("prepare: cached grid has the wrong resolution");
    p.grid_input = *grid;
  } else {
    p.grid_input = grid_input<Scalar>(s.mesh, S);
  }
  const Points3 nodes = geometry::grid_nodes(S);
  p.decode_edges = neighbors::radius_search(nodes, p.vertices, cfg.r_out);

  const geometry::PointSample ps = geometry::subsample_mesh(s.mesh, rate, stream_seed(seed, "subsample:" + s.id));
  p.rate_indices = ps.indices;
  if (cfg.variant == Variant::encoder_decoder) {
    p.enc_points = ps.points;
    p.enc_weights = Tensor<Scalar>({ps.points.rows()}, ps.weights.cast<Scalar>());
    p.enc_edges = neighbors::radius_search(ps.points, nodes, *cfg.r_in);
  }

  p.target.resize(n, 2);
  p.target.col(0) = s.field.pressure;
  p.target.col(1) = s.field.shear;
  p.target_norm = Tensor<Scalar>({n, 2});
  for (Index i = 0; i < n; ++i)
    for (Index f = 0; f < 2; ++f) p.target_norm[i * 2 + f] = static_cast<Scalar>((p.target(i, f) - norm.mean[f]) / norm.stdev[f]);
  const double area = geometry::frontal_area(s.mesh);
  const geometry::DragFunctional df = geometry::drag_functional(s.mesh, s.velocity, area);
  p.drag_coeffs.resize(n, 2);
  p.drag_coeffs.col(0) = df.pressure;
  p.drag_coeffs.col(1) = df.shear;
  p.drag_true = geometry::drag_coefficient(s.mesh, s.field, s.velocity, area).coefficient;
  return p;
}

struct LossParts {
  double pressure = 0;  // normalized relative L2
  double shear = 0;
  double drag = 0;  // relative drag error (0 when the term is disabled)
  double total = 0;
};

template <typename Scalar>
class Gino {
 public:
  Gino() = default;
  explicit Gino(GinoConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const Index c = cfg_.channels;
    gno::KernelSpec dec;
    dec.num_frequencies = cfg_.kernel_frequencies;
    dec.hidden = cfg_.kernel_hidden;
    dec.out_dim = cfg_.decoder_channels * c;
    dec.activation = cfg_.activation;
    dec.output_gain = 1.0 / std::sqrt(static_cast<double>(c));
    decoder_ = gno::KernelMlp<Scalar>("decoder", dec);
    if (cfg_.variant == Variant::encoder_decoder) {
      gno::KernelSpec enc = dec;
      enc.out_dim = cfg_.encoder_channels;
      enc.weighted = true;
      enc.output_gain = 1.0;
      encoder_ = gno::KernelMlp<Scalar>("encoder", enc);
    }
    block_.channels = c;
    block_.modes = cfg_.modes;
    block_.norm = cfg_.norm;
    block_.activation = cfg_.activation;
    nodes_ = geometry::grid_nodes(cfg_.latent_resolution);
  }

  const GinoConfig& config() const { return cfg_; }
  const fno::BlockSpec& block_spec() const { return block_; }
  Index input_channels() const { return 4 + (cfg_.variant == Variant::encoder_decoder ? cfg_.encoder_channels : 0); }

  ParameterSet<Scalar> params;
  ParameterSet<Scalar> buffers;  // fixed Fourier-feature frequencies

  /// Draws every parameter from the "init" stream of `seed`. The last projection layer
  /// starts at zero, so an untrained model predicts the training mean.
  void init(std::uint64_t seed) {
    params.clear();
    buffers.clear();
    auto rng = make_stream(seed, "init");
    const Index c = cfg_.channels, cin = input_channels();
    params["lift.w0"] = random_matrix(c, cin, rng);
    params["lift.b0"] = Tensor<Scalar>({c});
    params["lift.w1"] = random_matrix(c, c, rng);
    params["lift.b1"] = Tensor<Scalar>({c});
    for (Index l = 0; l < cfg_.layers; ++l) fno::init_block(params, buffers, block_name(l), block_, rng);
    decoder_.init(params, buffers, rng);
    if (cfg_.variant == Variant::encoder_decoder) encoder_.init(params, buffers, rng);
    params["proj.w0"] = random_matrix(c, cfg_.decoder_channels, rng);
    params["proj.b0"] = Tensor<Scalar>({c});
    params["proj.w1"] = Tensor<Scalar>({2, c});
    params["proj.b1"] = Tensor<Scalar>({2});
  }

  static std::string block_name(Index l) { return "block" + std::to_string(l); }

  /// Normalized (pressure, shear) at `queries` (vertex indices; all vertices when null): [Q, 2].
  Var<Scalar> forward(Tape<Scalar>& tape, const Bound<Scalar>& p, const Prepared<Scalar>& in,
                      const std::vector<Index>* queries = nullptr) const {
    const Index S = cfg_.latent_resolution;
    if (in.grid_input.rank() != 4 || in.grid_input.dim(0) != 4 || in.grid_input.dim(1) != S)
      throw ContractError("sample '" + in.id + "' was prepared for a different latent resolution");
    if (in.decode_edges.radius != cfg_.r_out || in.decode_edges.num_queries != in.num_vertices())
      throw ContractError("sample '" + in.id + "' was prepared with a different decoder radius");
    Var<Scalar> x = tape.constant(in.grid_input);
    if (cfg_.variant == Variant::encoder_decoder) {
      if (in.enc_edges.num_queries != S * S * S) throw ContractError("sample '" + in.id + "' lacks encoder inputs");
      const gno::LatentGrid grid{S};
      const auto kernel = gno::bind_used(encoder_, p, buffers, in.enc_points, in.enc_edges, &in.enc_weights);
      gno::EncodeOptions eo;
      eo.radius = *cfg_.r_in;
      eo.scale = 1.0 / (M_PI * eo.radius * eo.radius);  // surface patch area inside a ball
      eo.edges = &in.enc_edges;
      Var<Scalar> e = gno::gno_encode(tape, in.enc_points, static_cast<const Var<Scalar>*>(nullptr), in.enc_weights, grid, kernel,
                                      cfg_.encoder_channels, eo);
      x = concat0(std::vector<Var<Scalar>>{x, e});
    }
    Var<Scalar> h = activation(channel_linear(x, p["lift.w0"], p["lift.b0"]), cfg_.activation);
    h = channel_linear(h, p["lift.w1"], p["lift.b1"]);
    for (Index l = 0; l < cfg_.layers; ++l) h = fno::fno_block(h, p, buffers, block_name(l), block_, in.velocity);

    neighbors::EdgeList subset;
    Points3 qpts;
    if (queries) {
      subset = neighbors::select_queries(in.decode_edges, *queries);
      qpts.resize(static_cast<Index>(queries->size()), 3);
      for (std::size_t i = 0; i < queries->size(); ++i) qpts.row(static_cast<Index>(i)) = in.vertices.row((*queries)[i]);
    }
    gno::DecodeOptions d;
    d.radius = cfg_.r_out;
    d.batch_size = cfg_.decode_batch;
    d.scale = 3.0 / (4.0 * M_PI * std::pow(cfg_.r_out, 3));  // ball volume
    d.edges = queries ? &subset : &in.decode_edges;
    const auto kernel = gno::bind_used(decoder_, p, buffers, nodes_, *d.edges);
    Var<Scalar> u = gno::gno_decode(tape, h, queries ? qpts : in.vertices, kernel, cfg_.decoder_channels, d);
    u = activation(linear(u, p["proj.w0"], p["proj.b0"]), cfg_.activation);
    return linear(u, p["proj.w1"], p["proj.b1"]);
  }

  /// Weighted mean of the per-field relative L2 on normalized values plus the weighted
  /// relative drag error. With a query subset the drag integral is estimated on the subset
  /// (coefficients scaled by N / Q) for both prediction and target.
  Var<Scalar> loss(Tape<Scalar>& tape, const Bound<Scalar>& p, const Prepared<Scalar>& in, const Normalizer& norm,
                   const std::vector<Index>* queries = nullptr, LossParts* parts = nullptr) const {
    const Var<Scalar> pred = forward(tape, p, in, queries);
    const Index q = pred.dim(0);
    auto row = [&](Index i) { return queries ? (*queries)[static_cast<std::size_t>(i)] : i; };
    std::array<Var<Scalar>, 2> terms;
    for (Index f = 0; f < 2; ++f) {
      Tensor<Scalar> t({q, 1});
      for (Index i = 0; i < q; ++i) t[i] = in.target_norm[row(i) * 2 + f];
      terms[static_cast<std::size_t>(f)] = relative_l2(slice_last(pred, f, 1), t);
    }
    const double wsum = cfg_.pressure_weight + cfg_.shear_weight;
    Var<Scalar> total = add(scale(terms[0], static_cast<Scalar>(cfg_.pressure_weight / wsum)),
                            scale(terms[1], static_cast<Scalar>(cfg_.shear_weight / wsum)));
    double drag_err = 0;
    if (cfg_.drag_weight > 0) {
      const double factor = static_cast<double>(in.num_vertices()) / static_cast<double>(q);
      Tensor<Scalar> w({q, 2});
      double offset = 0, target = 0;
      for (Index i = 0; i < q; ++i)
        for (Index f = 0; f < 2; ++f) {
          const double a = factor * in.drag_coeffs(row(i), f);
          w[i * 2 + f] = static_cast<Scalar>(a * norm.stdev[f]);
          offset += a * norm.mean[f];
          target += a * in.target(row(i), f);
        }
      if (target == 0) throw ValidationError("sample '" + in.id + "': reference drag is zero");
      const Var<Scalar> err = abs(add_scalar(dot_constant(pred, w), static_cast<Scalar>(offset - target)));
      const Var<Scalar> rel = scale(err, static_cast<Scalar>(1.0 / std::abs(target)));
      drag_err = static_cast<double>(rel.value().item());
      total = add(total, scale(rel, static_cast<Scalar>(cfg_.drag_weight)));
    }
    if (parts) {
      parts->pressure = static_cast<double>(terms[0].value().item());
      parts->shear = static_cast<double>(terms[1].value().item());
      parts->drag = drag_err;
      parts->total = static_cast<double>(total.value().item());
    }
    return total;
  }

  /// De-normalized predictions at every vertex: [N, 2] (pressure, shear).
  Eigen::MatrixX2d predict(const Prepared<Scalar>& in, const Normalizer& norm) const {
    Tape<Scalar> tape;
    Bound<Scalar> p(tape, params, false);
    const Var<Scalar> y = forward(tape, p, in);
    Eigen::MatrixX2d out(y.dim(0), 2);
    for (Index i = 0; i < out.rows(); ++i)
      for (Index f = 0; f < 2; ++f) out(i, f) = static_cast<double>(y.value()[i * 2 + f]) * norm.stdev[f] + norm.mean[f];
    return out;
  }

 private:
  static Tensor<Scalar> random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    Tensor<Scalar> w({rows, cols});
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(n(rng));
    return w;
  }

  GinoConfig cfg_;
  fno::BlockSpec block_;
  gno::KernelMlp<Scalar> decoder_;
  gno::KernelMlp<Scalar> encoder_;
  Points3 nodes_;
};

}  // namespace gino::model
