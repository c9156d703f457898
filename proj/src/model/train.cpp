#include "gino/train.hpp"

#include "gino/container.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gino::model {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json record_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},           {"lr", r.lr},
          {"train_loss", r.train_loss}, {"train_pressure", r.train_pressure},
          {"train_shear", r.train_shear}, {"train_drag", r.train_drag},
          {"valid_l2", r.valid_l2}};
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<Index>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.train_pressure = j.at("train_pressure").get<double>();
  r.train_shear = j.at("train_shear").get<double>();
  r.train_drag = j.at("train_drag").get<double>();
  r.valid_l2 = j.at("valid_l2").get<double>();
  return r;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

double rel_l2(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  const double d = target.norm();
  if (!(d > 0)) throw ValidationError("relative L2 of a zero-norm target");
  return (pred - target).norm() / d;
}

}  // namespace

json Metrics::to_json(bool with_samples) const {
  json j;
  j["rate"] = rate;
  j["split"] = split;
  j["samples"] = per_sample.size();
  j["relative_l2"] = {{"pressure", rel_l2[0]}, {"shear", rel_l2[1]}, {"mean", rel_l2_mean}};
  j["relative_l2_normalized"] = {{"pressure", rel_l2_norm[0]}, {"shear", rel_l2_norm[1]}, {"mean", rel_l2_norm_mean}};
  j["drag_relative_error"] = drag_rel_error;
  if (with_samples) {
    j["per_sample"] = json::array();
    for (const auto& s : per_sample)
      j["per_sample"].push_back({{"id", s.id},
                                 {"relative_l2", s.rel_l2},
                                 {"relative_l2_normalized", s.rel_l2_norm},
                                 {"drag_pred", s.drag_pred},
                                 {"drag_true", s.drag_true},
                                 {"drag_relative_error", s.drag_rel_error}});
  }
  return j;
}

void Checkpoint::save(const fs::path& path) const {
  io::Archive a;
  a.meta["kind"] = "gino_checkpoint";
  a.meta["config"] = config.to_json();
  a.meta["normalizer"] = norm.to_json();
  a.meta["epoch"] = epoch;
  a.meta["best_valid"] = finite_or_null(best_valid);
  a.meta["adam"] = {{"step", adam.step}, {"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
  a.meta["history"] = json::array();
  for (const auto& r : history) a.meta["history"].push_back(record_json(r));
  for (const auto& [name, t] : params) a.put("param/" + name, t);
  for (const auto& [name, t] : buffers) a.put("buffer/" + name, t);
  for (const auto& [name, t] : adam.m) a.put("adam_m/" + name, t);
  for (const auto& [name, t] : adam.v) a.put("adam_v/" + name, t);
  a.save(path);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  const io::Archive a = io::Archive::load(path);
  if (a.meta.value("kind", std::string()) != "gino_checkpoint") throw IoError(path.string() + ": not a model checkpoint");
  Checkpoint c;
  try {
    c.config = GinoConfig::from_json(a.meta.at("config"));
    c.norm = Normalizer::from_json(a.meta.at("normalizer"));
    c.epoch = a.meta.at("epoch").get<Index>();
    c.best_valid = a.meta.at("best_valid").is_null() ? std::numeric_limits<double>::infinity() : a.meta.at("best_valid").get<double>();
    const json& ad = a.meta.at("adam");
    c.adam.step = ad.at("step").get<std::int64_t>();
    c.adam.lr = ad.at("lr").get<double>();
    c.adam.beta1 = ad.at("beta1").get<double>();
    c.adam.beta2 = ad.at("beta2").get<double>();
    c.adam.eps = ad.at("eps").get<double>();
    for (const auto& r : a.meta.at("history")) c.history.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  for (const auto& name : a.names()) {
    const auto slash = name.find('/');
    const std::string group = name.substr(0, slash), leaf = name.substr(slash + 1);
    if (group == "param") c.params[leaf] = a.get<float>(name);
    else if (group == "buffer") c.buffers[leaf] = a.get<float>(name);
    else if (group == "adam_m") c.adam.m[leaf] = a.get<float>(name);
    else if (group == "adam_v") c.adam.v[leaf] = a.get<float>(name);
  }
  return c;
}

Gino<float> Checkpoint::model() const {
  Gino<float> m(config);
  m.init(config.seed);  // establishes the expected parameter set
  for (const auto& [name, t] : m.params) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("checkpoint lacks parameter '" + name + "'");
    if (it->second.shape() != t.shape())
      throw ContractError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second.shape()));
  }
  if (params.size() != m.params.size()) throw ContractError("checkpoint has parameters the model does not use");
  m.params = params;
  m.buffers = buffers;
  return m;
}

SampleMetrics evaluate_sample(const Gino<float>& model, const Normalizer& norm, const data::Sample& sample,
                              const Prepared<float>& in) {
  const Eigen::MatrixX2d pred = model.predict(in, norm);
  SampleMetrics m;
  m.id = sample.id;
  const Index k = static_cast<Index>(in.rate_indices.size());
  for (Index f = 0; f < 2; ++f) {
    Eigen::VectorXd p(k), t(k), pn(k), tn(k);
    for (Index i = 0; i < k; ++i) {
      const Index v = in.rate_indices[static_cast<std::size_t>(i)];
      p[i] = pred(v, f);
      t[i] = in.target(v, f);
      pn[i] = (p[i] - norm.mean[static_cast<std::size_t>(f)]) / norm.stdev[static_cast<std::size_t>(f)];
      tn[i] = (t[i] - norm.mean[static_cast<std::size_t>(f)]) / norm.stdev[static_cast<std::size_t>(f)];
    }
    m.rel_l2[static_cast<std::size_t>(f)] = rel_l2(p, t);
    m.rel_l2_norm[static_cast<std::size_t>(f)] = rel_l2(pn, tn);
  }
  m.drag_pred = in.drag_coeffs.cwiseProduct(pred).sum();
  m.drag_true = in.drag_true;
  m.drag_rel_error = std::abs(m.drag_pred - m.drag_true) / std::abs(m.drag_true);
  return m;
}

namespace {

Metrics aggregate(std::vector<SampleMetrics> per, Index rate, const std::string& split) {
  Metrics m;
  m.rate = rate;
  m.split = split;
  const double n = static_cast<double>(per.size());
  for (const auto& s : per) {
    for (std::size_t f = 0; f < 2; ++f) {
      m.rel_l2[f] += s.rel_l2[f] / n;
      m.rel_l2_norm[f] += s.rel_l2_norm[f] / n;
    }
    m.drag_rel_error += s.drag_rel_error / n;
  }
  m.rel_l2_mean = 0.5 * (m.rel_l2[0] + m.rel_l2[1]);
  m.rel_l2_norm_mean = 0.5 * (m.rel_l2_norm[0] + m.rel_l2_norm[1]);
  m.per_sample = std::move(per);
  return m;
}

}  // namespace

Metrics evaluate(const Checkpoint& ckpt, const data::Dataset& data, const EvalOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Gino<float> model = ckpt.model();
  const auto idx = opt.split == "all" ? [&] {
    std::vector<Index> all(data.samples.size());
    std::iota(all.begin(), all.end(), Index{0});
    return all;
  }() : data.indices(opt.split);
  if (idx.empty()) throw ValidationError("no samples in split '" + opt.split + "'");
  std::vector<SampleMetrics> per;
  for (Index i : idx) {
    const data::Sample& s = data.samples[static_cast<std::size_t>(i)];
    if (opt.rate > s.mesh.num_vertices())
      throw ValidationError("rate " + std::to_string(opt.rate) + " exceeds the " + std::to_string(s.mesh.num_vertices()) +
                            " vertices of sample '" + s.id + "'");
    const Prepared<float> in = prepare<float>(s, ckpt.config, ckpt.norm, opt.rate, opt.seed);
    per.push_back(evaluate_sample(model, ckpt.norm, s, in));
  }
  Metrics m = aggregate(std::move(per), opt.rate, opt.split);
  m.wall_time = seconds_since(t0);
  return m;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,lr,train_loss,train_pressure,train_shear,train_drag,valid_l2\n";
  out.precision(10);
  for (const auto& r : history)
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_pressure << ',' << r.train_shear << ','
        << r.train_drag << ',' << r.valid_l2 << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Tape buffers are freed and reallocated every step; keep them off mmap.
void keep_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainResult train(const data::Dataset& data, const GinoConfig& config, const TrainOptions& opt) {
  keep_heap();
  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck;
  if (opt.resume) {
    ck = Checkpoint::load(*opt.resume);
  } else {
    config.validate();
    ck.config = config;
    ck.best_valid = std::numeric_limits<double>::infinity();
  }
  const GinoConfig& cfg = ck.config;
  const auto train_idx = data.indices("train"), valid_idx = data.indices("valid");
  if (train_idx.empty() || valid_idx.empty()) throw ValidationError("training needs nonempty train and valid splits");

  if (!opt.resume) {
    std::vector<const data::Sample*> ts;
    for (Index i : train_idx) ts.push_back(&data.samples[static_cast<std::size_t>(i)]);
    ck.norm = Normalizer::fit(ts);
    Gino<float> fresh(cfg);
    fresh.init(cfg.seed);
    ck.params = fresh.params;
    ck.buffers = fresh.buffers;
    ck.adam.lr = cfg.lr;
  }
  Gino<float> model = ck.model();

  std::vector<Prepared<float>> train_in, valid_in;
  for (Index i : train_idx) train_in.push_back(prepare<float>(data.samples[static_cast<std::size_t>(i)], cfg, ck.norm, cfg.train_rate, cfg.seed));
  for (Index i : valid_idx) valid_in.push_back(prepare<float>(data.samples[static_cast<std::size_t>(i)], cfg, ck.norm, 1, cfg.seed));

  if (!opt.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create " + opt.out_dir.string() + ": " + ec.message());
  }

  TrainResult result;
  const Index last_epoch = opt.stop_after > 0 ? std::min(cfg.epochs, opt.stop_after) : cfg.epochs;
  for (Index epoch = ck.epoch + 1; epoch <= last_epoch; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.lr * std::pow(0.5, static_cast<double>((epoch - 1) / cfg.halve_at_epoch));
    ck.adam.lr = rec.lr;

    std::vector<std::size_t> order(train_in.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle = make_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    auto sampling = make_stream(cfg.seed, "sampling", static_cast<std::uint64_t>(epoch));

    ParameterSet<float> grads;
    Index in_batch = 0;
    auto step = [&] {
      for (auto& [name, g] : grads) g.data() /= static_cast<float>(in_batch);
      adam_step(model.params, grads, ck.adam);
      grads.clear();
      in_batch = 0;
    };
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const Prepared<float>& in = train_in[order[pos]];
      std::vector<Index> pool = in.rate_indices;
      const Index want = cfg.train_queries;
      if (want > 0 && want < static_cast<Index>(pool.size())) {
        for (Index i = 0; i < want; ++i) {
          std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
          std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(sampling))]);
        }
        pool.resize(static_cast<std::size_t>(want));
        std::sort(pool.begin(), pool.end());
      }
      const bool everything = static_cast<Index>(pool.size()) == in.num_vertices();

      LossParts parts;
      Tape<float> tape;
      Bound<float> bound(tape, model.params);
      Var<float> loss;
      try {
        loss = model.loss(tape, bound, in, ck.norm, everything ? nullptr : &pool, &parts);
        if (!std::isfinite(parts.total)) throw NumericalError("loss is not finite");
        tape.backward(loss);
      } catch (const NumericalError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " on sample '" + in.id + "' (lr " +
                              std::to_string(rec.lr) + "): " + e.what());
      }
      for (auto& [name, g] : bound.gradients()) {
        auto [it, fresh] = grads.try_emplace(name, g);
        if (!fresh) it->second.data() += g.data();
      }
      ++in_batch;
      rec.train_loss += parts.total;
      rec.train_pressure += parts.pressure;
      rec.train_shear += parts.shear;
      rec.train_drag += parts.drag;
      if (in_batch == cfg.batch_size) step();
    }
    if (in_batch > 0) step();
    const double n = static_cast<double>(train_in.size());
    rec.train_loss /= n;
    rec.train_pressure /= n;
    rec.train_shear /= n;
    rec.train_drag /= n;

    for (auto& [name, t] : model.params)
      if (!t.all_finite()) throw DivergenceError("parameter '" + name + "' is not finite after epoch " + std::to_string(epoch));

    std::vector<SampleMetrics> per;
    for (std::size_t i = 0; i < valid_in.size(); ++i)
      per.push_back(evaluate_sample(model, ck.norm, data.samples[static_cast<std::size_t>(valid_idx[i])], valid_in[i]));
    rec.valid_l2 = aggregate(std::move(per), 1, "valid").rel_l2_mean;

    ck.params = model.params;
    ck.epoch = epoch;
    ck.history.push_back(rec);
    const bool improved = rec.valid_l2 < ck.best_valid;
    if (improved) ck.best_valid = rec.valid_l2;
    if (!opt.out_dir.empty()) {
      if (improved) ck.save(opt.out_dir / "best.ckpt");
      ck.save(opt.out_dir / "last.ckpt");
      write_history_csv(opt.out_dir / "loss.csv", ck.history);
    }
    if (opt.on_epoch) opt.on_epoch(rec);
  }

  result.seconds = seconds_since(t0);
  result.history = ck.history;
  result.best_path = opt.out_dir.empty() ? fs::path() : opt.out_dir / "best.ckpt";
  if (!opt.out_dir.empty()) {
    json m;
    m["config"] = cfg.to_json();
    m["normalizer"] = ck.norm.to_json();
    m["epochs_completed"] = ck.epoch;
    m["best_valid_relative_l2"] = finite_or_null(ck.best_valid);
    m["wall_time_seconds"] = result.seconds;
    m["history"] = json::array();
    for (const auto& r : ck.history) m["history"].push_back(record_json(r));
    write_json(opt.out_dir / "metrics.json", m);
  }
  result.last = std::move(ck);
  return result;
}

}  // namespace gino::model
