#ifndef MB2L_TRAINER_HPP
#define MB2L_TRAINER_HPP

#include "mb2l/datasets.hpp"
#include "mb2l/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mb2l {

enum class TrainMode { intra_subject, inter_subject };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

/// Loss weight of the high-level term for a training mode.
double default_alpha_high(TrainMode mode);

struct TrainConfig {
  std::string preset = "desk";
  int batch_size = 32;
  int epochs = 60;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::intra_subject;
  double alpha_high = 0.5;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

/// "desk" (batch 32, lr 1e-3, patience 10), "paper-intra" and "paper-inter"
/// (batch 256, lr 1e-4, 60 epochs, alpha_high 0.5 / 0.1).
TrainConfig train_preset(const std::string& name);

void validate_train_config(const TrainConfig& cfg);

struct TrainState {
  long long step = 0;
  int epoch = 0;  // number of validation results seen
  double best_val_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improve = 0;
};

enum class StopDecision { continue_training, stop };

/// Records one validation result; stops once the metric has failed to
/// strictly improve for `patience` consecutive epochs.
StopDecision early_stop_check(TrainState& state, double val_metric, int patience);

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_top1 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Model<float> model;
  std::vector<HistoryRow> history;
  TrainState state;
};

/// Images (plus their attenuated copies), EEG and frozen-feature cache for a
/// sample list. The attenuation seed depends only on concept and image index.
PreparedSet<float> prepare(const Model<float>& model, const std::vector<PairedSample>& samples);

/// Builds a model from `model_cfg` (with seed and alpha_high taken from
/// `cfg`) and trains it. When `val_set` is non-empty its fused top-1 drives
/// early stopping and the best-scoring snapshot is returned.
TrainResult train(const ModelConfig& model_cfg, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Same loop starting from an existing model.
TrainResult train(Model<float> model, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Model config whose input sizes match a dataset.
ModelConfig model_config_for(const Dataset& data, ModelConfig base = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

}  // namespace mb2l

#endif  // MB2L_TRAINER_HPP
