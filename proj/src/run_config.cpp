#include "mb2l/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace mb2l {

using nlohmann::json;

namespace {

// ---- typed field access -----------------------------------------------------

void put(json& j, const char* key, bool v) { j[key] = v; }
void put(json& j, const char* key, int v) { j[key] = v; }
void put(json& j, const char* key, double v) { j[key] = v; }
void put(json& j, const char* key, std::uint64_t v) { j[key] = v; }
void put(json& j, const char* key, const std::vector<std::string>& v) { j[key] = v; }
void put(json& j, const char* key, PriorKind v) { j[key] = to_string(v); }
void put(json& j, const char* key, Degradation v) { j[key] = to_string(v); }
void put(json& j, const char* key, EegEncoderKind v) { j[key] = to_string(v); }
void put(json& j, const char* key, TrainMode v) { j[key] = to_string(v); }

std::string type_name(const json& v) { return v.type_name(); }

void get(const json& v, const std::string& path, bool& out) {
  if (!v.is_boolean()) throw ConfigError(path, "expected a boolean, got " + type_name(v));
  out = v.get<bool>();
}

void get(const json& v, const std::string& path, int& out) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer, got " + type_name(v));
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(path, "integer out of range");
  }
  out = static_cast<int>(x);
}

void get(const json& v, const std::string& path, std::uint64_t& out) {
  if (!v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer, got " + type_name(v));
  out = v.get<std::uint64_t>();
}

void get(const json& v, const std::string& path, double& out) {
  if (!v.is_number()) throw ConfigError(path, "expected a number, got " + type_name(v));
  out = v.get<double>();
}

void get(const json& v, const std::string& path, std::string& out) {
  if (!v.is_string()) throw ConfigError(path, "expected a string, got " + type_name(v));
  out = v.get<std::string>();
}

void get(const json& v, const std::string& path, std::vector<std::string>& out) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of strings, got " + type_name(v));
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::string s;
    get(v[i], path + "[" + std::to_string(i) + "]", s);
    out.push_back(s);
  }
}

template <typename Enum, typename Parse>
void get_enum(const json& v, const std::string& path, Enum& out, Parse parse) {
  std::string s;
  get(v, path, s);
  try {
    out = parse(s);
  } catch (const InvalidParameter& e) {
    throw ConfigError(path, e.what());
  }
}

void get(const json& v, const std::string& path, PriorKind& out) { get_enum(v, path, out, prior_kind_from_string); }
void get(const json& v, const std::string& path, Degradation& out) { get_enum(v, path, out, degradation_from_string); }
void get(const json& v, const std::string& path, EegEncoderKind& out) {
  get_enum(v, path, out, eeg_encoder_kind_from_string);
}
void get(const json& v, const std::string& path, TrainMode& out) { get_enum(v, path, out, train_mode_from_string); }

/// Reads declared fields from an object and rejects undeclared ones.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object, got " + type_name(j_));
  }

  template <typename T>
  void operator()(const char* key, T& out) {
    known_.insert(key);
    if (j_.contains(key)) get(j_.at(key), path_ + "." + key, out);
  }

  bool has(const char* key) const { return j_.contains(key); }
  void declare(const char* key) { known_.insert(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) throw ConfigError(path_ + "." + item.key(), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

struct Writer {
  json& j;
  template <typename T>
  void operator()(const char* key, const T& v) {
    put(j, key, v);
  }
};

template <typename Self, typename F>
void model_fields(Self& c, F&& f) {
  f("abvp", c.abvp);
  f("bvfe", c.bvfe);
  f("mbcl", c.mbcl);
  f("prior", c.prior);
  f("degradation", c.degradation);
  f("image_size", c.image_size);
  f("image_channels", c.image_channels);
  f("channel_names", c.channel_names);
  f("samples", c.samples);
  f("eeg_encoder", c.eeg_encoder);
  f("token_dim", c.token_dim);
  f("eeg_hidden", c.eeg_hidden);
  f("eeg_kernel", c.eeg_kernel);
  f("eeg_stride", c.eeg_stride);
  f("eeg_filters", c.eeg_filters);
  f("eeg_pool", c.eeg_pool);
  f("attention_dim", c.attention_dim);
  f("heads", c.heads);
  f("image_depth", c.image_depth);
  f("image_width", c.image_width);
  f("image_out", c.image_out);
  f("frozen_depth", c.frozen_depth);
  f("frozen_width", c.frozen_width);
  f("frozen_out", c.frozen_out);
  f("frozen_seed", c.frozen_seed);
  f("projection_dim", c.projection_dim);
  f("tau", c.tau);
  f("alpha_low", c.alpha_low);
  f("alpha_high", c.alpha_high);
  f("include_positive", c.include_positive);
  f("prior_preferred", c.prior_preferred);
  f("prior_other", c.prior_other);
  f("seed", c.seed);
}

template <typename Self, typename F>
void train_fields(Self& c, F&& f) {
  f("batch_size", c.batch_size);
  f("epochs", c.epochs);
  f("learning_rate", c.learning_rate);
  f("weight_decay", c.weight_decay);
  f("early_stop_patience", c.early_stop_patience);
  f("seed", c.seed);
  f("mode", c.mode);
  f("alpha_high", c.alpha_high);
  f("grad_clip", c.grad_clip);
}

template <typename Self, typename F>
void synthetic_fields(Self& c, F&& f) {
  f("train_concepts", c.train_concepts);
  f("test_concepts", c.test_concepts);
  f("channels", c.channels);
  f("samples", c.samples);
  f("noise_sigma", c.noise_sigma);
  f("seed", c.seed);
  f("images_per_concept", c.images_per_concept);
  f("train_trials", c.train_trials);
  f("test_trials", c.test_trials);
  f("image_size", c.image_size);
  f("subjects", c.subjects);
  f("sampling_rate", c.sampling_rate);
}

void check_positive(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  json j = json::object();
  model_fields(cfg, Writer{j});
  return j;
}

ModelConfig model_config_from_json(const json& j, const std::string& path, ModelConfig base) {
  Reader r(j, path);
  model_fields(base, r);
  r.finish();
  const std::pair<const char*, int> positives[] = {
      {"image_size", base.image_size},   {"image_channels", base.image_channels}, {"samples", base.samples},
      {"token_dim", base.token_dim},     {"eeg_hidden", base.eeg_hidden},         {"eeg_kernel", base.eeg_kernel},
      {"eeg_stride", base.eeg_stride},   {"eeg_filters", base.eeg_filters},       {"eeg_pool", base.eeg_pool},
      {"attention_dim", base.attention_dim}, {"heads", base.heads},               {"image_depth", base.image_depth},
      {"image_width", base.image_width}, {"image_out", base.image_out},           {"frozen_depth", base.frozen_depth},
      {"frozen_width", base.frozen_width}, {"frozen_out", base.frozen_out},       {"projection_dim", base.projection_dim}};
  for (const auto& [key, value] : positives) check_positive(value >= 1, path + "." + key, "must be >= 1");
  check_positive(base.attention_dim % base.heads == 0, path + ".heads", "must divide attention_dim");
  check_positive(base.tau > 0.0, path + ".tau", "must be positive");
  check_positive(base.alpha_low >= 0.0, path + ".alpha_low", "must be >= 0");
  check_positive(base.alpha_high >= 0.0, path + ".alpha_high", "must be >= 0");
  if (base.abvp && !base.mbcl) throw ConfigError(path + ".abvp", "abvp requires mbcl");
  return base;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j = json::object();
  j["preset"] = cfg.preset;
  train_fields(cfg, Writer{j});
  return j;
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object, got " + type_name(j));
  std::string preset = "desk";
  if (j.contains("preset")) get(j.at("preset"), path + ".preset", preset);
  TrainConfig cfg;
  try {
    cfg = train_preset(preset);
  } catch (const InvalidParameter& e) {
    throw ConfigError(path + ".preset", e.what());
  }
  Reader r(j, path);
  r.declare("preset");
  train_fields(cfg, r);
  r.finish();
  if (j.contains("mode") && !j.contains("alpha_high")) cfg.alpha_high = default_alpha_high(cfg.mode);
  try {
    validate_train_config(cfg);
  } catch (const InvalidParameter& e) {
    throw ConfigError(path, e.what());
  }
  return cfg;
}

json synthetic_config_to_json(const SyntheticConfig& cfg) {
  json j = json::object();
  synthetic_fields(cfg, Writer{j});
  return j;
}

SyntheticConfig synthetic_config_from_json(const json& j, const std::string& path) {
  SyntheticConfig cfg;
  Reader r(j, path);
  synthetic_fields(cfg, r);
  r.finish();
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = {{"source", cfg.dataset.kind}, {"subject", cfg.dataset.subject}};
  if (cfg.dataset.kind == "directory") j["dataset"]["path"] = cfg.dataset.path.string();
  if (cfg.dataset.kind == "synthetic") j["dataset"]["synthetic"] = synthetic_config_to_json(cfg.dataset.synthetic);
  j["model"] = model_config_to_json(cfg.model);
  j["train"] = train_config_to_json(cfg.train);
  j["output"] = cfg.output.string();
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  for (const auto& item : j.items()) {
    static const std::set<std::string> top{"dataset", "model", "train", "output"};
    if (!top.count(item.key())) throw ConfigError(item.key(), "unknown key");
  }
  RunConfig cfg;
  if (!j.contains("dataset")) throw ConfigError("dataset", "required section is missing");
  {
    const json& d = j.at("dataset");
    if (!d.is_object()) throw ConfigError("dataset", "expected an object");
    for (const auto& item : d.items()) {
      static const std::set<std::string> keys{"source", "path", "subject", "synthetic"};
      if (!keys.count(item.key())) throw ConfigError("dataset." + item.key(), "unknown key");
    }
    if (d.contains("source")) get(d.at("source"), "dataset.source", cfg.dataset.kind);
    if (cfg.dataset.kind != "directory" && cfg.dataset.kind != "synthetic") {
      throw ConfigError("dataset.source", "expected \"directory\" or \"synthetic\", got \"" + cfg.dataset.kind + "\"");
    }
    if (d.contains("subject")) get(d.at("subject"), "dataset.subject", cfg.dataset.subject);
    if (cfg.dataset.kind == "directory") {
      if (!d.contains("path")) throw ConfigError("dataset.path", "required for a directory dataset");
      std::string p;
      get(d.at("path"), "dataset.path", p);
      cfg.dataset.path = p;
      if (!std::filesystem::is_directory(cfg.dataset.path)) {
        throw ConfigError("dataset.path", "directory '" + p + "' does not exist");
      }
      if (d.contains("synthetic")) throw ConfigError("dataset.synthetic", "only valid for a synthetic dataset");
    } else {
      if (d.contains("path")) throw ConfigError("dataset.path", "only valid for a directory dataset");
      if (d.contains("synthetic")) cfg.dataset.synthetic = synthetic_config_from_json(d.at("synthetic"), "dataset.synthetic");
    }
  }
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"), "model");
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), "train");
  if (j.contains("output")) {
    std::string out;
    get(j.at("output"), "output", out);
    cfg.output = out;
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

Dataset load_dataset(const DatasetSource& source) {
  if (source.kind == "synthetic") {
    Dataset ds = generate_synthetic(source.synthetic);
    if (source.subject >= 0) {
      ds.train = filter_subject(ds.train, source.subject);
      ds.test = filter_subject(ds.test, source.subject);
    } else if (source.synthetic.subjects > 1) {
      ds.train = filter_subject(ds.train, 0);
      ds.test = filter_subject(ds.test, 0);
    }
    return ds;
  }
  LoadOptions opts;
  opts.subject = source.subject;
  return load_things_format(source.path, opts);
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("MB2L_OUT"); root && *root) return std::filesystem::path(root) / path;
  return path;
}

}  // namespace mb2l
