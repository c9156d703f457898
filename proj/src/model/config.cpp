#include "gino/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gino::model {

using nlohmann::json;

std::string variant_name(Variant v) { return v == Variant::encoder_decoder ? "encoder_decoder" : "decoder_only"; }

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> k = {
      "variant", "latent_resolution", "channels", "layers", "modes", "r_in", "r_out", "encoder_channels", "decoder_channels",
      "kernel_hidden", "kernel_frequencies", "norm", "activation", "lr", "halve_at_epoch", "epochs", "batch_size",
      "loss_weights", "train_queries", "train_rate", "decode_batch", "seed"};
  return k;
}

struct Problems {
  std::vector<std::string> keys;
  std::ostringstream msg;
  void add(const std::string& key, const std::string& why) {
    keys.push_back(key);
    msg << "\n  " << key << ": " << why;
  }
  void raise() const {
    if (!keys.empty()) throw SchemaError("invalid config:" + msg.str(), keys);
  }
};

}  // namespace

void GinoConfig::validate() const {
  Problems bad;
  auto positive = [&](const char* key, double v) {
    if (!(v > 0)) bad.add(key, "must be positive");
  };
  positive("latent_resolution", static_cast<double>(latent_resolution));
  positive("channels", static_cast<double>(channels));
  positive("layers", static_cast<double>(layers));
  positive("r_out", r_out);
  positive("kernel_frequencies", static_cast<double>(kernel_frequencies));
  positive("decoder_channels", static_cast<double>(decoder_channels));
  if (lr < 0) bad.add("lr", "must be >= 0");
  positive("halve_at_epoch", static_cast<double>(halve_at_epoch));
  positive("epochs", static_cast<double>(epochs));
  positive("batch_size", static_cast<double>(batch_size));
  positive("train_rate", static_cast<double>(train_rate));
  positive("decode_batch", static_cast<double>(decode_batch));
  if (train_queries < 0) bad.add("train_queries", "must be >= 0");
  if (pressure_weight < 0 || shear_weight < 0 || pressure_weight + shear_weight <= 0)
    bad.add("loss_weights", "field weights must be >= 0 with a positive sum");
  if (drag_weight < 0) bad.add("loss_weights", "drag weight must be >= 0");
  if (kernel_hidden.empty()) bad.add("kernel_hidden", "needs at least one layer");
  for (Index w : kernel_hidden)
    if (w <= 0) bad.add("kernel_hidden", "widths must be positive");
  if (variant == Variant::decoder_only && r_in) bad.add("r_in", "not allowed for the decoder_only variant");
  if (variant == Variant::encoder_decoder) {
    if (!r_in) bad.add("r_in", "required for the encoder_decoder variant");
    else if (!(*r_in > 0)) bad.add("r_in", "must be positive");
    positive("encoder_channels", static_cast<double>(encoder_channels));
  }
  if (latent_resolution > 0) {
    try {
      fno::check_modes(modes, latent_resolution, latent_resolution, latent_resolution);
    } catch (const ValidationError& e) {
      bad.add("modes", e.what());
    }
  }
  bad.raise();
}

json GinoConfig::to_json() const {
  json j;
  j["variant"] = variant_name(variant);
  j["latent_resolution"] = latent_resolution;
  j["channels"] = channels;
  j["layers"] = layers;
  j["modes"] = {modes.m1, modes.m2, modes.m3};
  if (r_in) j["r_in"] = *r_in;
  j["r_out"] = r_out;
  j["encoder_channels"] = encoder_channels;
  j["decoder_channels"] = decoder_channels;
  j["kernel_hidden"] = kernel_hidden;
  j["kernel_frequencies"] = kernel_frequencies;
  j["norm"] = fno::norm_name(norm);
  j["activation"] = activation == Activation::gelu ? "gelu" : "relu";
  j["lr"] = lr;
  j["halve_at_epoch"] = halve_at_epoch;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["loss_weights"] = {{"pressure", pressure_weight}, {"shear", shear_weight}, {"drag", drag_weight}};
  j["train_queries"] = train_queries;
  j["train_rate"] = train_rate;
  j["decode_batch"] = decode_batch;
  j["seed"] = seed;
  return j;
}

GinoConfig GinoConfig::from_json(const json& j) {
  Problems bad;
  if (!j.is_object()) {
    bad.add("<root>", "config must be a JSON object");
    bad.raise();
  }
  for (const auto& [key, value] : j.items())
    if (!known_keys().count(key)) bad.add(key, "unknown key");
  GinoConfig c;
  for (const char* key : {"variant", "latent_resolution", "modes", "r_out"})
    if (!j.contains(key)) bad.add(key, "required (no default for physics-relevant settings)");

  auto read = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const json::exception&) {
      bad.add(key, "wrong type");
    }
  };
  std::string variant = "decoder_only", norm = "adaptive", act = "gelu";
  read("variant", variant);
  if (variant == "decoder_only") c.variant = Variant::decoder_only;
  else if (variant == "encoder_decoder") c.variant = Variant::encoder_decoder;
  else bad.add("variant", "expected decoder_only or encoder_decoder");
  if (c.variant == Variant::encoder_decoder && !j.contains("r_in")) bad.add("r_in", "required for the encoder_decoder variant");
  if (c.variant == Variant::decoder_only && j.contains("r_in")) bad.add("r_in", "not allowed for the decoder_only variant");

  read("latent_resolution", c.latent_resolution);
  read("channels", c.channels);
  read("layers", c.layers);
  if (j.contains("modes")) {
    const json& m = j.at("modes");
    if (m.is_number_integer()) {
      const Index a = m.get<Index>();
      c.modes = {a, a, a};
    } else if (m.is_array() && m.size() == 3 && m[0].is_number_integer() && m[1].is_number_integer() && m[2].is_number_integer()) {
      c.modes = {m[0].get<Index>(), m[1].get<Index>(), m[2].get<Index>()};
    } else {
      bad.add("modes", "expected an integer or [m1, m2, m3]");
    }
  }
  if (j.contains("r_in")) {
    double r = 0;
    read("r_in", r);
    c.r_in = r;
  }
  read("r_out", c.r_out);
  read("encoder_channels", c.encoder_channels);
  read("decoder_channels", c.decoder_channels);
  read("kernel_hidden", c.kernel_hidden);
  read("kernel_frequencies", c.kernel_frequencies);
  read("norm", norm);
  try {
    c.norm = fno::parse_norm(norm);
  } catch (const ValidationError&) {
    bad.add("norm", "expected none, instance or adaptive");
  }
  read("activation", act);
  try {
    c.activation = parse_activation(act);
  } catch (const ValidationError&) {
    bad.add("activation", "expected gelu or relu");
  }
  read("lr", c.lr);
  read("halve_at_epoch", c.halve_at_epoch);
  read("epochs", c.epochs);
  read("batch_size", c.batch_size);
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    if (!w.is_object()) {
      bad.add("loss_weights", "expected an object");
    } else {
      for (const auto& [key, value] : w.items()) {
        if (!value.is_number()) {
          bad.add("loss_weights." + key, "expected a number");
          continue;
        }
        if (key == "pressure") c.pressure_weight = value.get<double>();
        else if (key == "shear") c.shear_weight = value.get<double>();
        else if (key == "drag") c.drag_weight = value.get<double>();
        else bad.add("loss_weights." + key, "unknown key");
      }
    }
  }
  read("train_queries", c.train_queries);
  read("train_rate", c.train_rate);
  read("decode_batch", c.decode_batch);
  read("seed", c.seed);
  bad.raise();
  c.validate();
  return c;
}

GinoConfig GinoConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

Normalizer Normalizer::fit(const std::vector<const data::Sample*>& samples) {
  Normalizer n;
  std::array<double, 2> sum{0, 0}, sq{0, 0};
  double count = 0;
  for (const data::Sample* s : samples) {
    sum[0] += s->field.pressure.sum();
    sum[1] += s->field.shear.sum();
    sq[0] += s->field.pressure.squaredNorm();
    sq[1] += s->field.shear.squaredNorm();
    count += static_cast<double>(s->field.size());
  }
  if (count == 0) throw ValidationError("normalizer needs at least one training vertex");
  for (std::size_t f = 0; f < 2; ++f) {
    n.mean[f] = sum[f] / count;
    const double var = std::max(0.0, sq[f] / count - n.mean[f] * n.mean[f]);
    n.stdev[f] = var > 0 ? std::sqrt(var) : 1.0;
  }
  return n;
}

json Normalizer::to_json() const { return {{"mean", mean}, {"std", stdev}}; }

Normalizer Normalizer::from_json(const json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::array<double, 2>>();
  n.stdev = j.at("std").get<std::array<double, 2>>();
  return n;
}

}  // namespace gino::model
