#include "doctest.h"
#include "grad_check.hpp"

#include "gino/adam.hpp"
#include "gino/container.hpp"
#include "gino/dataset.hpp"
#include "gino/train.hpp"

#include <json.hpp>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

using namespace gino;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gino_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Shared 6-sample dataset of small meshes.
const data::Dataset& small_data() {
  static const data::Dataset d = [] {
    const fs::path dir = scratch("small_data");
    data::GenerateOptions g;
    g.count = 6;
    g.seed = 3;
    g.target_vertices = 300;
    data::generate_dataset(dir, g);
    return data::load_dataset(dir);
  }();
  return d;
}

model::GinoConfig tiny_config() {
  model::GinoConfig c;
  c.latent_resolution = 8;
  c.channels = 4;
  c.layers = 1;
  c.modes = {2, 2, 2};
  c.r_out = 0.35;
  c.decoder_channels = 3;
  c.kernel_hidden = {8};
  c.kernel_frequencies = 4;
  c.lr = 1e-2;
  c.halve_at_epoch = 2;
  c.epochs = 3;
  c.train_queries = 64;
  c.seed = 11;
  return c;
}

}  // namespace

// ---------------------------------------------------------------- adam

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  ParameterSet<double> p{{"w", Tensor<double>({3}, Eigen::VectorXd::Constant(3, 0.7))}};
  ParameterSet<double> g{{"w", Tensor<double>({3})}};
  AdamState<double> st;
  st.lr = 0.1;
  for (int i = 0; i < 5; ++i) adam_step(p, g, st);
  CHECK(p.at("w")[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(st.step == 5);
}

TEST_CASE("first adam step moves each coordinate by lr against the gradient sign") {
  ParameterSet<double> p{{"w", Tensor<double>({2}, Eigen::Vector2d(1.0, -2.0))}};
  ParameterSet<double> g{{"w", Tensor<double>({2}, Eigen::Vector2d(3.0, -0.01))}};
  AdamState<double> st;
  st.lr = 0.1;
  adam_step(p, g, st);
  CHECK(p.at("w")[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.at("w")[1] == doctest::Approx(-1.9).epsilon(1e-5));
}

TEST_CASE("adam minimizes a quadratic") {
  ParameterSet<double> p{{"w", Tensor<double>({2}, Eigen::Vector2d(3.0, -4.0))}};
  AdamState<double> st;
  st.lr = 0.1;
  for (int i = 0; i < 400; ++i) {
    ParameterSet<double> g{{"w", Tensor<double>({2}, Eigen::Vector2d(2 * p.at("w")[0], 20 * p.at("w")[1]))}};
    adam_step(p, g, st);
  }
  CHECK(p.at("w").data().norm() < 1e-2);
}

TEST_CASE("adam rejects a gradient of the wrong shape") {
  ParameterSet<double> p{{"w", Tensor<double>({2})}};
  ParameterSet<double> g{{"w", Tensor<double>({3})}};
  AdamState<double> st;
  CHECK_THROWS_AS(adam_step(p, g, st), DimensionError);
}

// ---------------------------------------------------------------- container

TEST_CASE("container round-trips tensors bit-exactly") {
  io::Archive a;
  Tensor<float> f({2, 3});
  Tensor<double> d({4});
  for (Index i = 0; i < 6; ++i) f[i] = 0.1f * float(i) - 0.25f;
  for (Index i = 0; i < 4; ++i) d[i] = std::sqrt(double(i) + 0.3);
  a.put("f", f);
  a.put("d", d);
  a.put_vector("v", Eigen::Vector3d(1, 2, 3));
  a.meta["note"] = "x";
  const fs::path file = scratch("container") / "a.bin";
  a.save(file);
  const io::Archive b = io::Archive::load(file);
  CHECK(b.meta.at("note") == "x");
  CHECK(b.names() == std::vector<std::string>{"d", "f", "v"});
  CHECK(b.at("f").dtype == io::DType::f32);
  CHECK(b.get<float>("f").shape() == Shape{2, 3});
  CHECK(b.get<float>("f").data() == f.data());
  CHECK(b.get<double>("d").data() == d.data());
  CHECK(b.get_vector("v") == Eigen::Vector3d(1, 2, 3));
  CHECK(b.serialize() == a.serialize());
}

TEST_CASE("container reports malformed input as io errors") {
  io::Archive a;
  a.put("x", Tensor<double>({5}));
  std::vector<unsigned char> bytes = a.serialize();
  CHECK_THROWS_AS(io::Archive::deserialize({bytes.begin(), bytes.begin() + 20}), IoError);
  CHECK_THROWS_AS(io::Archive::deserialize({bytes.begin(), bytes.end() - 8}), IoError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(io::Archive::deserialize(bad), IoError);
  CHECK_THROWS_AS(io::Archive::load("/nonexistent/dir/file.ckpt"), IoError);
  CHECK_THROWS_AS(a.get<double>("missing"), IoError);
}

// ---------------------------------------------------------------- dataset

TEST_CASE("latin hypercube puts one sample in every stratum of every axis") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd u = data::latin_hypercube(200, 7, rng);
  REQUIRE(u.rows() == 200);
  for (Index d = 0; d < 7; ++d) {
    const auto s = data::strata(u.col(d));
    const std::set<Index> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 200);
    CHECK(*uniq.begin() == 0);
    CHECK(*uniq.rbegin() == 199);
  }
  for (const auto& p : data::scale_to_bounds(u)) CHECK_NOTHROW(p.validate());
}

TEST_CASE("dataset generation is reproducible from the seed") {
  data::GenerateOptions g;
  g.count = 3;
  g.seed = 9;
  g.target_vertices = 200;
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  data::generate_dataset(a, g);
  data::generate_dataset(b, g);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  CHECK(slurp(a / "fields/sample_0002.field") == slurp(b / "fields/sample_0002.field"));
  g.seed = 10;
  const fs::path c = scratch("gen_c");
  data::generate_dataset(c, g);
  CHECK(slurp(a / "manifest.json") != slurp(c / "manifest.json"));
}

TEST_CASE("a single-sample dataset loads and has an oracle field") {
  data::GenerateOptions g;
  g.count = 1;
  g.target_vertices = 200;
  const fs::path dir = scratch("gen_one");
  data::generate_dataset(dir, g);
  const data::Dataset d = data::load_dataset(dir / "manifest.json");
  REQUIRE(d.samples.size() == 1);
  const auto& s = d.samples[0];
  CHECK(s.field.size() == s.mesh.num_vertices());
  const auto oracle = geometry::oracle_field(s.mesh, s.velocity);
  CHECK((oracle.pressure - s.field.pressure).norm() == 0);
}

TEST_CASE("split labels hold out about a fifth, at least one") {
  const auto l = data::split_labels(200, 1);
  CHECK(std::count(l.begin(), l.end(), "valid") == 40);
  const auto two = data::split_labels(2, 1);
  CHECK(std::count(two.begin(), two.end(), "valid") == 1);
}

TEST_CASE("loading a dataset with a missing file names the path") {
  const fs::path dir = scratch("gen_missing");
  data::GenerateOptions g;
  g.count = 2;
  g.target_vertices = 200;
  data::generate_dataset(dir, g);
  fs::remove(dir / "meshes/sample_0001.obj");
  try {
    data::load_dataset(dir);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("sample_0001.obj") != std::string::npos);
  }
  CHECK_THROWS_AS(data::load_dataset(dir / "nope"), IoError);
}

TEST_CASE("manifest validation rejects duplicate ids") {
  data::Manifest m = small_data().manifest;
  m.samples[1].id = m.samples[0].id;
  CHECK_THROWS_AS(m.validate(), ValidationError);
}

// ---------------------------------------------------------------- config

TEST_CASE("config round-trips through json") {
  model::GinoConfig c = tiny_config();
  c.variant = model::Variant::encoder_decoder;
  c.r_in = 0.2;
  c.drag_weight = 0.5;
  const auto j = c.to_json();
  const auto back = model::GinoConfig::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("config schema errors name the offending keys") {
  using nlohmann::json;
  json j = tiny_config().to_json();
  auto keys_of = [](const json& cfg) {
    try {
      model::GinoConfig::from_json(cfg);
    } catch (const model::SchemaError& e) {
      return e.keys;
    }
    return std::vector<std::string>{};
  };
  json unknown = j;
  unknown["learning_rate"] = 1;
  CHECK(keys_of(unknown) == std::vector<std::string>{"learning_rate"});
  json missing = j;
  missing.erase("r_out");
  missing.erase("modes");
  const auto mk = keys_of(missing);
  CHECK(std::count(mk.begin(), mk.end(), "r_out") == 1);
  CHECK(std::count(mk.begin(), mk.end(), "modes") == 1);
  json forbidden = j;
  forbidden["r_in"] = 0.1;
  CHECK(keys_of(forbidden) == std::vector<std::string>{"r_in"});
  json enc = j;
  enc["variant"] = "encoder_decoder";
  CHECK(keys_of(enc) == std::vector<std::string>{"r_in"});
  json neg = j;
  neg["channels"] = -2;
  CHECK(keys_of(neg) == std::vector<std::string>{"channels"});
  json too_many = j;
  too_many["modes"] = 6;  // S = 8 keeps at most 5 per axis
  CHECK(keys_of(too_many) == std::vector<std::string>{"modes"});
}

// ---------------------------------------------------------------- model

TEST_CASE("untrained model predicts the training mean everywhere") {
  const auto& d = small_data();
  const auto cfg = tiny_config();
  model::Normalizer norm;
  norm.mean = {3.0, -1.0};
  norm.stdev = {2.0, 0.5};
  model::Gino<float> m(cfg);
  m.init(1);
  const auto in = model::prepare<float>(d.samples[0], cfg, norm, 1, 0);
  const Eigen::MatrixX2d y = m.predict(in, norm);
  CHECK((y.col(0).array() - 3.0).abs().maxCoeff() < 1e-6);
  CHECK((y.col(1).array() + 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("query order only permutes the decoded rows") {
  const auto& d = small_data();
  const auto cfg = tiny_config();
  model::Gino<double> m(cfg);
  m.init(2);
  std::mt19937_64 rng(4);
  for (auto& [name, t] : m.params)
    if (name == "proj.w1")
      for (Index i = 0; i < t.size(); ++i) t[i] = std::normal_distribution<double>(0, 0.3)(rng);
  const auto in = model::prepare<double>(d.samples[1], cfg, {}, 1, 0);
  std::vector<Index> q(40);
  std::iota(q.begin(), q.end(), 0);
  std::vector<Index> r = q;
  std::shuffle(r.begin(), r.end(), rng);
  Tape<double> t1, t2;
  const auto a = m.forward(t1, Bound<double>(t1, m.params), in, &q).value();
  const auto b = m.forward(t2, Bound<double>(t2, m.params), in, &r).value();
  double worst = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (Index f = 0; f < 2; ++f) worst = std::max(worst, std::abs(b[Index(i) * 2 + f] - a[r[i] * 2 + f]));
  CHECK(worst < 1e-12);
}

TEST_CASE("loss gradient matches finite differences through the whole model") {
  const auto& d = small_data();
  auto cfg = tiny_config();
  cfg.latent_resolution = 6;
  cfg.r_out = 0.45;
  model::Gino<double> m(cfg);
  m.init(3);
  std::mt19937_64 rng(8);
  for (Index i = 0; i < m.params.at("proj.w1").size(); ++i) m.params.at("proj.w1")[i] = std::normal_distribution<double>(0, 0.3)(rng);
  model::Normalizer norm;
  norm.mean = {10.0, 5.0};
  norm.stdev = {40.0, 8.0};
  const auto in = model::prepare<double>(d.samples[2], cfg, norm, 1, 0);
  const std::vector<Index> q = {0, 5, 17, 33, 60, 99};
  const auto rep = testing::check_gradients(m.params, [&](const Bound<double>& p) {
    Tape<double>& tape = p.tape();
    return m.loss(tape, p, in, norm, &q);
  });
  INFO(rep.where);
  CHECK(rep.worst < 1e-4);
}

// ---------------------------------------------------------------- training

TEST_CASE("training with lr = 0 leaves the parameters at their initial values") {
  auto cfg = tiny_config();
  cfg.lr = 0;
  cfg.epochs = 1;
  const auto res = model::train(small_data(), cfg);
  model::Gino<float> fresh(cfg);
  fresh.init(cfg.seed);
  for (const auto& [name, t] : fresh.params) CHECK(res.last.params.at(name).data() == t.data());
}

TEST_CASE("training is deterministic and resume equals an uninterrupted run") {
  const auto cfg = tiny_config();
  const fs::path a = scratch("train_a"), b = scratch("train_b"), c = scratch("train_c");
  model::TrainOptions oa;
  oa.out_dir = a;
  const auto ra = model::train(small_data(), cfg, oa);
  model::TrainOptions ob;
  ob.out_dir = b;
  const auto rb = model::train(small_data(), cfg, ob);
  REQUIRE(ra.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
  CHECK(slurp(a / "last.ckpt") == slurp(b / "last.ckpt"));
  CHECK(slurp(a / "loss.csv") == slurp(b / "loss.csv"));
  CHECK(ra.history.back().train_loss < ra.history.front().train_loss);

  model::TrainOptions first;
  first.out_dir = c;
  first.stop_after = 1;
  model::train(small_data(), cfg, first);
  model::TrainOptions rest;
  rest.out_dir = c;
  rest.resume = c / "last.ckpt";
  const auto rc = model::train(small_data(), cfg, rest);
  REQUIRE(rc.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rc.history[i].train_loss == ra.history[i].train_loss);
  CHECK(slurp(c / "last.ckpt") == slurp(a / "last.ckpt"));
}

TEST_CASE("checkpoint reload reproduces predictions and evaluation") {
  const auto cfg = tiny_config();
  const fs::path dir = scratch("train_eval");
  model::TrainOptions o;
  o.out_dir = dir;
  const auto res = model::train(small_data(), cfg, o);
  const auto ck = model::Checkpoint::load(dir / "last.ckpt");
  CHECK(ck.epoch == 3);
  CHECK(ck.config.to_json() == cfg.to_json());
  const auto m1 = model::evaluate(res.last, small_data());
  const auto m2 = model::evaluate(ck, small_data());
  CHECK(m1.rel_l2_mean == m2.rel_l2_mean);
  CHECK(m1.rel_l2_mean == doctest::Approx(res.history.back().valid_l2).epsilon(1e-12));
  const auto all = model::evaluate(ck, small_data(), {1, "all", 0});
  CHECK(all.per_sample.size() == small_data().samples.size());
}

TEST_CASE("oracle drag terms agree with the loss coefficients") {
  const auto& s = small_data().samples[0];
  const auto cfg = tiny_config();
  const auto in = model::prepare<float>(s, cfg, {}, 1, 0);
  double cd = 0;
  for (Index i = 0; i < in.num_vertices(); ++i) cd += in.drag_coeffs.row(i).dot(in.target.row(i));
  CHECK(cd == doctest::Approx(in.drag_true).epsilon(1e-10));
}

// Regression fixture: written on the first run, compared on every later one. Delete the file
// after an intended numerical change.
TEST_CASE("trained toy model reproduces the golden outputs") {
  const fs::path fixture = fs::path(GINO_FIXTURE_DIR) / "golden_toy.json";
  const fs::path dir = scratch("golden");
  model::TrainOptions o;
  o.out_dir = dir;
  const auto res = model::train(small_data(), tiny_config(), o);
  const auto ck = model::Checkpoint::load(dir / "last.ckpt");
  const data::Sample& s = small_data().samples[1];
  const Eigen::MatrixX2d pred = ck.model().predict(model::prepare<float>(s, ck.config, ck.norm, 1, 0), ck.norm);
  const Index n = std::min<Index>(64, pred.rows());

  if (!fs::exists(fixture)) {
    nlohmann::json j;
    j["sample"] = s.id;
    j["pressure"] = std::vector<double>(pred.col(0).data(), pred.col(0).data() + n);
    j["shear"] = std::vector<double>(pred.col(1).data(), pred.col(1).data() + n);
    fs::create_directories(fixture.parent_path());
    std::ofstream(fixture) << j.dump(1) << '\n';
    MESSAGE("wrote golden fixture " << fixture);
    return;
  }
  std::ifstream in(fixture);
  const auto j = nlohmann::json::parse(in);
  REQUIRE(j.at("sample") == s.id);
  const auto p = j.at("pressure").get<std::vector<double>>(), t = j.at("shear").get<std::vector<double>>();
  REQUIRE(static_cast<Index>(p.size()) == n);
  double worst = 0;
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    worst = std::max(worst, std::abs(pred(i, 0) - p[k]) / std::max(1.0, std::abs(p[k])));
    worst = std::max(worst, std::abs(pred(i, 1) - t[k]) / std::max(1.0, std::abs(t[k])));
  }
  CHECK(worst <= 1e-6);
  CHECK(res.history.size() == 3);
}
