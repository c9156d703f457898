#pragma once

#include "gino/adam.hpp"
#include "gino/model.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace gino::model {

/// Raised when the training loss stops being finite.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct EpochRecord {
  Index epoch = 0;
  double lr = 0;
  double train_loss = 0;  // mean training objective over the epoch
  double train_pressure = 0;
  double train_shear = 0;
  double train_drag = 0;
  double valid_l2 = 0;  // de-normalized relative L2 on the validation split
};

struct SampleMetrics {
  std::string id;
  std::array<double, 2> rel_l2_norm{0, 0};  // on z-scored values
  std::array<double, 2> rel_l2{0, 0};       // on physical values
  double drag_pred = 0;
  double drag_true = 0;
  double drag_rel_error = 0;
};

struct Metrics {
  Index rate = 1;
  std::string split;
  std::array<double, 2> rel_l2_norm{0, 0};
  std::array<double, 2> rel_l2{0, 0};
  double rel_l2_norm_mean = 0;  // mean over fields and samples
  double rel_l2_mean = 0;       // headline test error
  double drag_rel_error = 0;
  double wall_time = 0;
  std::vector<SampleMetrics> per_sample;

  nlohmann::json to_json(bool with_samples = false) const;
};

struct Checkpoint {
  GinoConfig config;
  Normalizer norm;
  ParameterSet<float> params;
  ParameterSet<float> buffers;
  AdamState<float> adam;
  Index epoch = 0;
  double best_valid = 0;
  std::vector<EpochRecord> history;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  Gino<float> model() const;
};

struct TrainOptions {
  /// Receives best.ckpt, last.ckpt, metrics.json and loss.csv; nothing is written when empty.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint (its config and state win over `config`).
  std::optional<std::filesystem::path> resume;
  /// Stop after this epoch (<= 0: run to config.epochs).
  Index stop_after = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint last;
  std::vector<EpochRecord> history;
  std::filesystem::path best_path;
  double seconds = 0;
};

/// Adam over the "train" split, lr halved every `halve_at_epoch` epochs, one parameter update
/// per `batch_size` samples. Samples are visited in a per-epoch shuffled order.
TrainResult train(const data::Dataset& data, const GinoConfig& config, const TrainOptions& opt = {});

struct EvalOptions {
  Index rate = 1;
  std::string split = "valid";
  std::uint64_t seed = 0;
};

/// Field errors on the vertices kept at `rate`; drag from the prediction at every vertex.
Metrics evaluate(const Checkpoint& ckpt, const data::Dataset& data, const EvalOptions& opt = {});

/// Metrics for one prepared sample.
SampleMetrics evaluate_sample(const Gino<float>& model, const Normalizer& norm, const data::Sample& sample,
                              const Prepared<float>& in);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace gino::model
