#include "mb2l/checkpoint.hpp"

#include "mb2l/run_config.hpp"

#include <fstream>
#include <map>

namespace mb2l {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const TrainConfig& train) {
  json j;
  j["format"] = "mb2l-checkpoint";
  j["version"] = 1;
  j["seed"] = model.cfg.seed;
  j["model_config"] = model_config_to_json(model.cfg);
  j["train_config"] = train_config_to_json(train);
  json tensors = json::object();
  ModelParams<float>::for_each(model.params, [&](const std::string& name, const Matrix<float>& m) {
    std::vector<float> data(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  });
  j["parameters"] = tensors;
  std::vector<bool> mask(model.params.gate.trainable.begin(), model.params.gate.trainable.end());
  j["gate_trainable"] = mask;
  j["channel_prior_trainable"] = model.params.eeg.prior.trainable;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump();
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "mb2l-checkpoint") throw ParseError(path.string() + " is not an mb2l checkpoint");
  for (const char* key : {"model_config", "train_config", "parameters"}) {
    if (!j.contains(key)) throw ParseError("checkpoint is missing '" + std::string(key) + "'");
  }

  Checkpoint ck;
  try {
    ck.train = train_config_from_json(j.at("train_config"), "train_config");
    ck.model = Model<float>::create(model_config_from_json(j.at("model_config"), "model_config"));
  } catch (const InvalidParameter& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  if (j.contains("channel_prior_trainable")) {
    ck.model.params.eeg.prior.trainable = j.at("channel_prior_trainable").get<bool>();
  }
  const json& tensors = j.at("parameters");
  std::size_t seen = 0;
  ModelParams<float>::for_each(ck.model.params, [&](const std::string& name, Matrix<float>& m) {
    if (!tensors.contains(name)) throw ParseError("checkpoint lacks parameter '" + name + "'");
    const json& t = tensors.at(name);
    const auto rows = t.at("rows").get<Index>();
    const auto cols = t.at("cols").get<Index>();
    if (rows != m.rows() || cols != m.cols()) {
      throw ParseError("checkpoint parameter '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", model expects " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    const auto data = t.at("data").get<std::vector<float>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw ParseError("checkpoint parameter '" + name + "' is truncated");
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    ++seen;
  });
  if (seen != tensors.size()) throw ParseError("checkpoint holds parameters this model does not have");
  if (j.contains("gate_trainable")) {
    const auto mask = j.at("gate_trainable").get<std::vector<bool>>();
    auto& gate = ck.model.params.gate;
    if (static_cast<Index>(mask.size()) == gate.trainable.size()) {
      for (std::size_t i = 0; i < mask.size(); ++i) gate.trainable(static_cast<Index>(i)) = mask[i];
    }
  }
  return ck;
}

}  // namespace mb2l
