#include "doctest.h"

#include "gino/cli.hpp"
#include "gino/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gino;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result gino_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path p = [] {
    const fs::path d = fs::temp_directory_path() / "gino_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

std::string path(const char* name) { return (workdir() / name).string(); }

void write(const std::string& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

const char* kTinyConfig = R"({
  "variant": "decoder_only", "latent_resolution": 8, "channels": 4, "layers": 1, "modes": 2,
  "r_out": 0.35, "decoder_channels": 3, "kernel_hidden": [8], "kernel_frequencies": 4,
  "lr": 0.01, "epochs": 2, "train_queries": 64
})";

}  // namespace

TEST_CASE("cli end to end: gen-data, train, eval, predict, drag") {
  auto r = gino_cli({"gen-data", "--n", "4", "--seed", "2", "--vertices", "250", "--out", path("data")});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(path("data") + "/manifest.json"));

  write(path("tiny.json"), kTinyConfig);
  r = gino_cli({"train", "--config", path("tiny.json"), "--data", path("data"), "--out", path("run"), "--seed", "5"});
  REQUIRE(r.code == 0);
  for (const char* f : {"best.ckpt", "last.ckpt", "loss.csv", "metrics.json", "config.json"}) CHECK(fs::exists(path("run") + "/" + f));
  std::ifstream cf(path("run") + "/config.json");
  const json echoed = json::parse(cf);
  CHECK(echoed.at("seed") == 5);
  CHECK(echoed.at("halve_at_epoch") == 50);  // defaults are echoed

  r = gino_cli({"eval", "--checkpoint", path("run") + "/best.ckpt", "--data", path("data"), "--rate", "1", "--rate", "2", "--out",
                path("eval.json")});
  REQUIRE(r.code == 0);
  const json ej = json::parse(r.out);
  CHECK(ej.at("runs").size() == 2);
  CHECK(fs::exists(path("eval.csv")));

  r = gino_cli({"eval", "--checkpoint", path("run") + "/best.ckpt", "--data", path("data"), "--super-res"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).contains("protocol"));

  const data::Dataset d = data::load_dataset(path("data"));
  const std::string id = d.samples[0].id;
  r = gino_cli({"predict", "--checkpoint", path("run") + "/best.ckpt", "--data", path("data"), "--sample", id, "--out", path("pred.field")});
  REQUIRE(r.code == 0);
  CHECK(data::read_field(path("pred.field")).size() == d.samples[0].mesh.num_vertices());

  r = gino_cli({"drag", "--data", path("data"), "--sample", id, "--oracle"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).at("relative_error") == 0.0);

  r = gino_cli({"drag", "--data", path("data"), "--sample", id, "--field", path("pred.field")});
  REQUIRE(r.code == 0);
  r = gino_cli({"drag", "--data", path("data"), "--sample", id, "--checkpoint", path("run") + "/best.ckpt"});
  REQUIRE(r.code == 0);
}

TEST_CASE("cli exit codes") {
  CHECK(gino_cli({}).code == 2);
  CHECK(gino_cli({"frobnicate"}).code == 2);
  CHECK(gino_cli({"--help"}).code == 0);
  CHECK(gino_cli({"train", "--config", path("absent.json"), "--data", path("absent"), "--out", path("x")}).code == 3);

  gino_cli({"gen-data", "--n", "2", "--vertices", "200", "--out", path("data2")});
  write(path("bad.json"), R"({"variant": "decoder_only", "latent_resolution": 8, "modes": 2, "r_out": 0.3, "r_in": 0.1, "colour": 1})");
  const auto r = gino_cli({"train", "--config", path("bad.json"), "--data", path("data2"), "--out", path("bad")});
  CHECK(r.code == 2);
  CHECK(r.err.find("r_in") != std::string::npos);
  CHECK(r.err.find("colour") != std::string::npos);

  write(path("broken.json"), "{ not json");
  CHECK(gino_cli({"train", "--config", path("broken.json"), "--data", path("data2"), "--out", path("bad")}).code == 2);

  write(path("diverge.json"), R"({"variant": "decoder_only", "latent_resolution": 8, "channels": 4, "layers": 1, "modes": 2,
    "r_out": 0.35, "decoder_channels": 3, "kernel_hidden": [8], "kernel_frequencies": 4, "lr": 1e30, "epochs": 3})");
  CHECK(gino_cli({"train", "--config", path("diverge.json"), "--data", path("data2"), "--out", path("div")}).code == 4);

  CHECK(gino_cli({"eval", "--checkpoint", path("nothing.ckpt"), "--data", path("data2")}).code == 3);
  CHECK(gino_cli({"gen-data", "--n", "0", "--out", path("zero")}).code == 2);
}

TEST_CASE("bench-neighbors csv rows agree with brute force") {
  const auto r = gino_cli({"bench-neighbors", "--n", "500", "--n", "2000", "--radius", "0.1", "--verify"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "n,build_ms,query_ms,edges,brute_ms,identical");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("500,", 0) == 0);
  CHECK(rows[1].rfind("2000,", 0) == 0);
  for (const auto& row : rows) CHECK(row.substr(row.rfind(',') + 1) == "true");
}
