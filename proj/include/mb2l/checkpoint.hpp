#ifndef MB2L_CHECKPOINT_HPP
#define MB2L_CHECKPOINT_HPP

// Single JSON archive holding the model config, training config, seed and
// every trainable tensor by name. The frozen encoder is rebuilt from its seed.

#include "mb2l/model.hpp"
#include "mb2l/trainer.hpp"

#include <filesystem>

namespace mb2l {

struct Checkpoint {
  Model<float> model;
  TrainConfig train;
};

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const TrainConfig& train);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mb2l

#endif  // MB2L_CHECKPOINT_HPP
