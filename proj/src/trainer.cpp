#include "mb2l/trainer.hpp"

#include "mb2l/evaluator.hpp"
#include "mb2l/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace mb2l {

std::string to_string(TrainMode mode) { return mode == TrainMode::intra_subject ? "intra_subject" : "inter_subject"; }

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "intra_subject") return TrainMode::intra_subject;
  if (name == "inter_subject") return TrainMode::inter_subject;
  throw InvalidParameter("unknown training mode '" + name + "' (expected intra_subject or inter_subject)");
}

double default_alpha_high(TrainMode mode) { return mode == TrainMode::intra_subject ? 0.5 : 0.1; }

TrainConfig train_preset(const std::string& name) {
  TrainConfig cfg;
  cfg.preset = name;
  if (name == "desk") return cfg;
  if (name == "paper-intra" || name == "paper-inter") {
    cfg.batch_size = 256;
    cfg.epochs = 60;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = 1e-4;
    cfg.mode = name == "paper-intra" ? TrainMode::intra_subject : TrainMode::inter_subject;
    cfg.alpha_high = default_alpha_high(cfg.mode);
    return cfg;
  }
  throw InvalidParameter("unknown training preset '" + name + "' (expected desk, paper-intra or paper-inter)");
}

void validate_train_config(const TrainConfig& cfg) {
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(std::isfinite(cfg.learning_rate) && cfg.learning_rate >= 0.0, "learning_rate must be finite and >= 0");
  require(std::isfinite(cfg.weight_decay) && cfg.weight_decay >= 0.0, "weight_decay must be finite and >= 0");
  require(cfg.early_stop_patience >= 1, "early_stop_patience must be >= 1");
  require(std::isfinite(cfg.alpha_high) && cfg.alpha_high >= 0.0, "alpha_high must be finite and >= 0");
  require(std::isfinite(cfg.grad_clip), "grad_clip must be finite");
}

StopDecision early_stop_check(TrainState& state, double val_metric, int patience) {
  require(patience >= 1, "patience must be >= 1");
  if (val_metric > state.best_val_metric) {
    state.best_val_metric = val_metric;
    state.best_epoch = state.epoch;
    state.epochs_since_improve = 0;
  } else {
    ++state.epochs_since_improve;
  }
  ++state.epoch;
  return state.epochs_since_improve >= patience ? StopDecision::stop : StopDecision::continue_training;
}

PreparedSet<float> prepare(const Model<float>& model, const std::vector<PairedSample>& samples) {
  const auto& cfg = model.cfg;
  PreparedSet<float> set;
  set.radial = radial_map<float>(cfg.image_size, cfg.image_size);
  const bool gate = cfg.gate_active();
  for (const auto& s : samples) {
    require(s.image.height == cfg.image_size && s.image.width == cfg.image_size,
            "sample image is " + std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                " but the model expects " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
    require(s.image.channels == cfg.image_channels, "sample image channel count differs from the model");
    require(s.epoch.channels() == static_cast<Index>(cfg.channel_names.size()) && s.epoch.samples() == cfg.samples,
            "sample epoch is " + std::to_string(s.epoch.channels()) + "x" + std::to_string(s.epoch.samples()) +
                " but the model expects " + std::to_string(cfg.channel_names.size()) + "x" +
                std::to_string(cfg.samples));
    const std::uint64_t seed = static_cast<std::uint64_t>(s.concept_id) * 7919ULL +
                               static_cast<std::uint64_t>(s.image_index) * 31ULL + 5ULL;
    if (gate) {
      set.original.push_back(s.image);
      set.attenuated.push_back(degrade(s.image, cfg.degradation, seed));
    } else {
      // Without the gate the degradation (if any) applies to the whole image.
      set.input.push_back(degrade(s.image, cfg.degradation, seed));
    }
    set.epochs.push_back(s.epoch.data);
    set.concept_ids.push_back(s.concept_id);
  }
  cache_frozen_features(model, set);
  return set;
}

ModelConfig model_config_for(const Dataset& data, ModelConfig base) {
  const auto& any = !data.train.empty() ? data.train.front() : data.test.at(0);
  base.image_size = static_cast<int>(any.image.height);
  base.image_channels = static_cast<int>(any.image.channels);
  base.channel_names = data.channel_names.empty() ? any.epoch.channel_names : data.channel_names;
  base.samples = static_cast<int>(any.epoch.samples());
  return base;
}

namespace {

std::string batch_diagnostics(const Model<float>& model, const PreparedSet<float>& data,
                              const std::vector<Index>& batch, const BatchLoss<float>& loss, int epoch,
                              long long step) {
  std::ostringstream out;
  out << "non-finite loss at epoch " << epoch << ", step " << step << ": total=" << loss.total << " low=" << loss.low
      << " high=" << loss.high << ", log_inv_tau=" << model.params.log_inv_tau(0, 0) << ", batch size " << batch.size();
  double max_abs = 0.0;
  bool finite = true;
  for (Index idx : batch) {
    const auto& e = data.epochs[static_cast<std::size_t>(idx)];
    finite = finite && e.allFinite();
    if (e.size() > 0) max_abs = std::max(max_abs, static_cast<double>(e.cwiseAbs().maxCoeff()));
  }
  out << ", EEG max |x|=" << max_abs << (finite ? "" : " (non-finite input)");
  int bad = 0;
  ModelParams<float>::for_each(model.params, [&](const std::string&, const Matrix<float>& m) {
    if (!m.allFinite()) ++bad;
  });
  out << ", non-finite parameter tensors: " << bad;
  return out.str();
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set, const TrainConfig& cfg, std::ostream* log) {
  validate_train_config(cfg);
  ModelConfig mc = model_cfg;
  mc.seed = cfg.seed;
  mc.alpha_high = cfg.alpha_high;
  return train(Model<float>::create(mc), train_set, val_set, cfg, log);
}

TrainResult train(Model<float> model, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set, const TrainConfig& cfg, std::ostream* log) {
  validate_train_config(cfg);
  require(!train_set.empty(), "training set is empty");
  assert_zero_shot(train_set, {});
  model.cfg.alpha_high = cfg.alpha_high;

  const PreparedSet<float> train_data = prepare(model, train_set);
  const PreparedSet<float> val_data = prepare(model, val_set);
  std::vector<int> val_ids = val_data.concept_ids;

  std::vector<Matrix<float>*> params;
  ModelParams<float>::for_each(model.params, [&](const std::string&, Matrix<float>& m) { params.push_back(&m); });

  typename AdamW<float>::Options opts;
  opts.lr = cfg.learning_rate;
  opts.weight_decay = cfg.weight_decay;
  AdamW<float> optimizer(opts);

  TrainResult result;
  ModelParams<float> best = model.params;
  std::mt19937_64 rng(cfg.seed ^ 0xda942042e4dd58b5ULL);
  std::vector<Index> order(static_cast<std::size_t>(train_data.size()));
  std::iota(order.begin(), order.end(), Index(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      if (batch.size() < 2 && order.size() >= 2) continue;  // a lone pair carries no contrast

      ModelParams<float> grad = model.params.zeros_like();
      const BatchLoss<float> loss = batch_loss(model, train_data, batch, &grad);
      if (!std::isfinite(loss.total)) {
        throw NumericalFailure(batch_diagnostics(model, train_data, batch, loss, epoch, result.state.step));
      }
      std::vector<Matrix<float>*> grads;
      ModelParams<float>::for_each(grad, [&](const std::string&, Matrix<float>& m) { grads.push_back(&m); });
      const double norm = clip_global_norm(grads, cfg.grad_clip);
      if (!std::isfinite(norm)) {
        throw NumericalFailure("non-finite gradient norm at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(result.state.step) + " (loss " + std::to_string(loss.total) + ")");
      }

      const Matrix<float> gate_before = model.params.gate.params;
      optimizer.step(params, std::vector<const Matrix<float>*>(grads.begin(), grads.end()));
      auto& gate = model.params.gate;
      for (Index i = 0; i < gate.params.size(); ++i)
        if (i < gate.trainable.size() && !gate.trainable(i)) gate.params(i) = gate_before(i);
      gate.project();

      ++result.state.step;
      loss_sum += loss.total;
      ++batches;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = batches ? loss_sum / batches : 0.0;
    bool stop = false;
    if (val_data.size() > 0) {
      const auto emb = embed(model, val_data);
      const auto sim = retrieval_similarity(emb, Level::fused, model.cfg.alpha_low, model.cfg.alpha_high, val_ids);
      row.val_top1 = top_k_accuracy(sim, 1);
      stop = early_stop_check(result.state, row.val_top1, cfg.early_stop_patience) == StopDecision::stop;
      if (result.state.best_epoch == epoch) best = model.params;
    }
    result.history.push_back(row);
    if (log) {
      *log << "epoch " << std::setw(3) << epoch << "  loss " << std::fixed << std::setprecision(4) << row.train_loss;
      if (val_data.size() > 0) *log << "  val_top1 " << std::setprecision(4) << row.val_top1;
      *log << std::defaultfloat << "\n";
    }
    if (stop) break;
  }
  if (val_data.size() > 0) model.params = best;
  result.model = std::move(model);
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_top1\n";
  out << std::setprecision(9);
  for (const auto& row : history) {
    out << row.epoch << "," << row.train_loss << ",";
    if (std::isfinite(row.val_top1)) out << row.val_top1;
    out << "\n";
  }
}

}  // namespace mb2l
