#include "gino/cli.hpp"

#include "gino/container.hpp"
#include "gino/dataset.hpp"
#include "gino/neighbors.hpp"
#include "gino/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

namespace gino::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void require_path(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

struct GenData {
  long long n = 1;
  std::uint64_t seed = 0;
  std::string out;
  long long vertices = 2000;
};

struct Train {
  std::string config, data, out, resume;
  std::optional<std::uint64_t> seed;
};

struct Eval {
  std::string checkpoint, data, out, split = "valid";
  std::vector<long long> rates;
  bool super_res = false;
  std::uint64_t seed = 0;
};

struct Predict {
  std::string checkpoint, data, sample, out;
};

struct Drag {
  std::string checkpoint, data, sample, field;
  bool oracle = false;
};

struct BenchNeighbors {
  std::vector<long long> n{10000};
  double radius = 0.05;
  std::uint64_t seed = 0;
  bool verify = false;
};

int cmd_gen_data(const GenData& o, std::ostream& out) {
  if (o.out.empty()) throw ValidationError("gen-data needs --out");
  data::GenerateOptions g;
  g.count = o.n;
  g.seed = o.seed;
  g.target_vertices = o.vertices;
  const data::Manifest m = data::generate_dataset(o.out, g);
  out << "wrote " << m.samples.size() << " samples to " << (fs::path(o.out) / "manifest.json").string() << '\n';
  return ok;
}

int cmd_train(const Train& o, std::ostream& out) {
  if (o.out.empty()) throw ValidationError("train needs --out");
  require_path(o.data, "dataset");
  model::GinoConfig cfg;
  if (o.resume.empty()) {
    if (o.config.empty()) throw ValidationError("train needs --config (or --resume)");
    require_path(o.config, "config");
    cfg = model::GinoConfig::load(o.config);
    if (o.seed) cfg.seed = *o.seed;
  }
  const data::Dataset d = data::load_dataset(o.data);
  model::TrainOptions t;
  t.out_dir = o.out;
  if (!o.resume.empty()) {
    require_path(o.resume, "checkpoint");
    t.resume = fs::path(o.resume);
  }
  t.on_epoch = [&](const model::EpochRecord& r) {
    out << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " valid_l2 " << r.valid_l2 << std::endl;
  };
  const model::TrainResult res = model::train(d, cfg, t);
  // echo the effective config, defaults included
  write_text(fs::path(o.out) / "config.json", res.last.config.to_json().dump(2) + "\n");
  out << "checkpoint " << res.best_path.string() << '\n';
  return ok;
}

int cmd_eval(const Eval& o, std::ostream& out) {
  require_path(o.checkpoint, "checkpoint");
  require_path(o.data, "dataset");
  const model::Checkpoint ck = model::Checkpoint::load(o.checkpoint);
  const data::Dataset d = data::load_dataset(o.data);
  std::vector<long long> rates = o.rates.empty() ? std::vector<long long>{1} : o.rates;
  if (o.super_res && (rates.size() != 1 || rates[0] != 1))
    throw ValidationError("--super-res evaluates at rate 1; do not combine it with --rate");
  json result;
  result["checkpoint"] = o.checkpoint;
  result["variant"] = model::variant_name(ck.config.variant);
  if (o.super_res) {
    result["protocol"] = "super-resolution: trained at rate " + std::to_string(ck.config.train_rate) + ", tested at rate 1 (full mesh)";
    result["train_rate"] = ck.config.train_rate;
  }
  result["runs"] = json::array();
  std::ostringstream csv;
  csv << "rate,relative_l2,relative_l2_pressure,relative_l2_shear,relative_l2_normalized,drag_relative_error\n";
  csv.precision(10);
  for (long long r : rates) {
    model::EvalOptions e;
    e.rate = r;
    e.split = o.split;
    e.seed = o.seed;
    const model::Metrics m = model::evaluate(ck, d, e);
    json j = m.to_json(true);
    result["runs"].push_back(j);
    csv << r << ',' << m.rel_l2_mean << ',' << m.rel_l2[0] << ',' << m.rel_l2[1] << ',' << m.rel_l2_norm_mean << ','
        << m.drag_rel_error << '\n';
  }
  const std::string text = result.dump(2) + "\n";
  if (!o.out.empty()) {
    write_text(o.out, text);
    if (rates.size() > 1) write_text(fs::path(o.out).replace_extension(".csv"), csv.str());
  }
  out << text;
  return ok;
}

int cmd_predict(const Predict& o, std::ostream& out) {
  require_path(o.checkpoint, "checkpoint");
  require_path(o.data, "dataset");
  if (o.out.empty()) throw ValidationError("predict needs --out");
  const model::Checkpoint ck = model::Checkpoint::load(o.checkpoint);
  const data::Dataset d = data::load_dataset(o.data);
  const data::Sample& s = d.by_id(o.sample);
  const auto in = model::prepare<float>(s, ck.config, ck.norm, 1, 0);
  const Eigen::MatrixX2d pred = ck.model().predict(in, ck.norm);
  geometry::SurfaceField f;
  f.pressure = pred.col(0);
  f.shear = pred.col(1);
  data::write_field(o.out, f, s.id, s.velocity);
  out << "wrote " << pred.rows() << " predicted values to " << o.out << '\n';
  return ok;
}

int cmd_drag(const Drag& o, std::ostream& out) {
  require_path(o.data, "dataset");
  const data::Dataset d = data::load_dataset(o.data);
  const data::Sample& s = d.by_id(o.sample);
  geometry::SurfaceField pred;
  std::string source;
  if (o.oracle) {
    pred = s.field;
    source = "oracle";
  } else if (!o.field.empty()) {
    require_path(o.field, "field");
    pred = data::read_field(o.field);
    source = o.field;
  } else {
    if (o.checkpoint.empty()) throw ValidationError("drag needs --checkpoint, --field or --oracle");
    require_path(o.checkpoint, "checkpoint");
    const model::Checkpoint ck = model::Checkpoint::load(o.checkpoint);
    const auto in = model::prepare<float>(s, ck.config, ck.norm, 1, 0);
    const Eigen::MatrixX2d p = ck.model().predict(in, ck.norm);
    pred.pressure = p.col(0);
    pred.shear = p.col(1);
    source = o.checkpoint;
  }
  if (pred.size() != s.mesh.num_vertices())
    throw ValidationError("field has " + std::to_string(pred.size()) + " values for " + std::to_string(s.mesh.num_vertices()) + " vertices");
  const double area = geometry::frontal_area(s.mesh);
  const geometry::DragReport p = geometry::drag_coefficient(s.mesh, pred, s.velocity, area);
  const geometry::DragReport t = geometry::drag_coefficient(s.mesh, s.field, s.velocity, area);
  json j;
  j["sample"] = s.id;
  j["prediction"] = source;
  j["drag_pred"] = p.coefficient;
  j["drag_oracle"] = t.coefficient;
  j["relative_error"] = std::abs(p.coefficient - t.coefficient) / std::abs(t.coefficient);
  j["pressure_term"] = p.pressure_term;
  j["shear_term"] = p.shear_term;
  out << j.dump(2) << '\n';
  return ok;
}

int cmd_bench_neighbors(const BenchNeighbors& o, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point t0) { return std::chrono::duration<double, std::milli>(clock::now() - t0).count(); };
  out << "n,build_ms,query_ms,edges" << (o.verify ? ",brute_ms,identical" : "") << '\n';
  for (const long long n : o.n) {
    if (n < 1) throw ValidationError("--n must be >= 1");
    auto rng = make_stream(o.seed, "bench");
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Points3 pts(n, 3), qs(n, 3);
    for (Index i = 0; i < n; ++i)
      for (Index a = 0; a < 3; ++a) pts(i, a) = u(rng);
    for (Index i = 0; i < n; ++i)
      for (Index a = 0; a < 3; ++a) qs(i, a) = u(rng);
    auto t0 = clock::now();
    const neighbors::HashGrid grid(pts, o.radius);
    const double build = ms(t0);
    t0 = clock::now();
    const neighbors::EdgeList fast = grid.radius_query(qs, o.radius);
    const double query = ms(t0);
    out << n << ',' << build << ',' << query << ',' << fast.num_edges();
    if (o.verify) {
      t0 = clock::now();
      const neighbors::EdgeList slow = neighbors::brute_force_radius(pts, qs, o.radius);
      const double brute = ms(t0);
      out << ',' << brute << ',' << (slow == fast ? "true" : "false");
    }
    out << '\n';
  }
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geometry-informed neural operator toolkit"};
  app.require_subcommand(1);

  GenData gen;
  auto* g = app.add_subcommand("gen-data", "Generate a Latin-hypercube dataset of Ahmed-like bodies");
  g->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--vertices", gen.vertices, "Target surface vertices per body")->check(CLI::PositiveNumber);

  Train tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Config JSON");
  t->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--seed", tr.seed, "Override the config seed");
  t->add_option("--resume", tr.resume, "Continue from a checkpoint");

  Eval ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  e->add_option("--out", ev.out, "Metrics JSON path (a CSV is written next to it for several rates)");
  e->add_option("--rate", ev.rates, "Surface subsampling rate(s)")->check(CLI::PositiveNumber);
  e->add_flag("--super-res", ev.super_res, "Test at rate 1 a model trained at a coarser rate");
  e->add_option("--split", ev.split, "train, valid or all");
  e->add_option("--seed", ev.seed, "Subsampling seed");

  Predict pr;
  auto* p = app.add_subcommand("predict", "Predict the surface field of one sample");
  p->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  p->add_option("--data", pr.data, "Dataset directory or manifest")->required();
  p->add_option("--sample", pr.sample, "Sample id")->required();
  p->add_option("--out", pr.out, "Output field file")->required();

  Drag dr;
  auto* d = app.add_subcommand("drag", "Drag coefficient of a predicted field");
  d->add_option("--checkpoint", dr.checkpoint, "Checkpoint file");
  d->add_option("--data", dr.data, "Dataset directory or manifest")->required();
  d->add_option("--sample", dr.sample, "Sample id")->required();
  d->add_option("--field", dr.field, "Use this field file as the prediction");
  d->add_flag("--oracle", dr.oracle, "Use the reference field as the prediction");

  BenchNeighbors bn;
  auto* b = app.add_subcommand("bench-neighbors", "Time hash-grid radius search on random points");
  b->add_option("--n", bn.n, "Points and queries (repeatable, one row each)")->check(CLI::PositiveNumber);
  b->add_option("--radius", bn.radius, "Search radius")->check(CLI::PositiveNumber);
  b->add_option("--seed", bn.seed, "Point seed");
  b->add_flag("--verify", bn.verify, "Also time brute force and compare edge lists");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return validation;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (p->parsed()) return cmd_predict(pr, out);
    if (d->parsed()) return cmd_drag(dr, out);
    if (b->parsed()) return cmd_bench_neighbors(bn, out);
  } catch (const model::SchemaError& ex) {
    err << "error: " << ex.what() << '\n';
    return validation;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << '\n';
    return io;
  } catch (const NumericalError& ex) {
    err << "error: " << ex.what() << '\n';
    return divergence;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return io;
  } catch (const std::invalid_argument& ex) {  // validation and dimension errors
    err << "error: " << ex.what() << '\n';
    return validation;
  } catch (const std::logic_error& ex) {  // contract errors
    err << "error: " << ex.what() << '\n';
    return validation;
  }
  return validation;
}

}  // namespace gino::cli
