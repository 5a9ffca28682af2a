#include "mb2l/datasets.hpp"
#include "mb2l/eeg_pipeline.hpp"
#include "mb2l/image_io.hpp"
#include "mb2l/image_pipeline.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mb2l {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (const auto& v : items) s.push_back(std::to_string(v));
  return join(s);
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("metadata field '" + key + "' is not an integer: '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("metadata field '" + key + "' is not a number: '" + value + "'");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_split(const fs::path& dir, const std::string& name, const std::vector<PairedSample>& samples,
                 const std::vector<std::string>& channel_names) {
  ArrayMetadata meta;
  meta.count = static_cast<Index>(samples.size());
  meta.channel_names = channel_names;
  meta.channels = static_cast<Index>(channel_names.size());
  if (!samples.empty()) {
    const auto& first = samples.front();
    meta.trials = first.trials.empty() ? 1 : static_cast<Index>(first.trials.size());
    meta.samples = first.epoch.samples();
    meta.sampling_rate = first.epoch.sampling_rate;
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(meta.count * meta.trials * meta.channels * meta.samples * 2));
  auto push = [&](float v) {
    const std::uint16_t bits = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v));
    bytes.push_back(static_cast<std::uint8_t>(bits & 0xFF));
    bytes.push_back(static_cast<std::uint8_t>(bits >> 8));
  };
  for (const auto& s : samples) {
    const Index trials = s.trials.empty() ? 1 : static_cast<Index>(s.trials.size());
    require(trials == meta.trials, "all samples in a split must have the same trial count");
    require(s.epoch.channels() == meta.channels && s.epoch.samples() == meta.samples,
            "all samples in a split must share the epoch shape");
    meta.concept_ids.push_back(s.concept_id);
    meta.image_indices.push_back(s.image_index);
    for (Index t = 0; t < trials; ++t) {
      const Matrix<float>& x = s.trials.empty() ? s.epoch.data : s.trials[static_cast<std::size_t>(t)];
      for (Index c = 0; c < x.rows(); ++c)
        for (Index k = 0; k < x.cols(); ++k) push(x(c, k));
    }
  }
  std::ofstream out(dir / (name + ".f16"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / (name + ".f16")).string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + (dir / (name + ".f16")).string());
  write_text(dir / (name + ".meta"), format_metadata(meta));
}

std::vector<PairedSample> read_split(const fs::path& root, const fs::path& dir, const std::string& name,
                                     int subject_id, const LoadOptions& options,
                                     std::vector<std::string>& selected_names) {
  const ArrayMetadata meta = parse_metadata(read_text(dir / (name + ".meta")));
  const fs::path data_path = dir / (name + ".f16");
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + data_path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected = static_cast<std::size_t>(meta.count * meta.trials * meta.channels * meta.samples * 2);
  if (raw.size() != expected) {
    throw ParseError(data_path.string() + " holds " + std::to_string(raw.size()) + " bytes but the metadata shape " +
                     std::to_string(meta.count) + "x" + std::to_string(meta.trials) + "x" +
                     std::to_string(meta.channels) + "x" + std::to_string(meta.samples) + " needs " +
                     std::to_string(expected));
  }

  std::vector<std::string> wanted = options.channels;
  if (wanted.empty()) {
    const auto& visual = visual_montage();
    const bool has_visual = std::all_of(visual.begin(), visual.end(), [&](const std::string& n) {
      return std::find(meta.channel_names.begin(), meta.channel_names.end(), n) != meta.channel_names.end();
    });
    wanted = has_visual ? visual : meta.channel_names;
  }
  selected_names = wanted;

  std::size_t offset = 0;
  auto next = [&]() {
    const auto lo = static_cast<std::uint8_t>(raw[offset]);
    const auto hi = static_cast<std::uint8_t>(raw[offset + 1]);
    offset += 2;
    const auto bits = static_cast<std::uint16_t>(lo | (hi << 8));
    return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
  };

  std::vector<PairedSample> out;
  std::map<std::pair<int, int>, ImageGrid<float>> image_cache;
  for (Index i = 0; i < meta.count; ++i) {
    PairedSample s;
    s.concept_id = meta.concept_ids[static_cast<std::size_t>(i)];
    s.image_index = meta.image_indices[static_cast<std::size_t>(i)];
    s.subject_id = subject_id;
    std::vector<EEGEpoch<float>> trials;
    for (Index t = 0; t < meta.trials; ++t) {
      EEGEpoch<float> e;
      e.channel_names = meta.channel_names;
      e.sampling_rate = meta.sampling_rate;
      e.data.resize(meta.channels, meta.samples);
      for (Index c = 0; c < meta.channels; ++c)
        for (Index k = 0; k < meta.samples; ++k) e.data(c, k) = next();
      trials.push_back(select_channels(e, wanted));
      s.trials.push_back(trials.back().data);
    }
    s.epoch = average_repetitions(trials);
    const auto key = std::make_pair(s.concept_id, s.image_index);
    auto it = image_cache.find(key);
    if (it == image_cache.end()) {
      const fs::path img_path =
          root / "images" / std::to_string(s.concept_id) / (std::to_string(s.image_index) + ".png");
      it = image_cache.emplace(key, read_png(img_path)).first;
    }
    s.image = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string format_metadata(const ArrayMetadata& meta) {
  std::ostringstream out;
  out.precision(17);
  out << "format: " << meta.format << "\n";
  out << "version: " << meta.version << "\n";
  out << "count: " << meta.count << "\n";
  out << "trials: " << meta.trials << "\n";
  out << "channels: " << meta.channels << "\n";
  out << "samples: " << meta.samples << "\n";
  out << "sampling_rate: " << meta.sampling_rate << "\n";
  out << "channel_names: " << join(meta.channel_names) << "\n";
  out << "concept_ids: " << join_numbers(meta.concept_ids) << "\n";
  out << "image_indices: " << join_numbers(meta.image_indices) << "\n";
  return out.str();
}

ArrayMetadata parse_metadata(const std::string& text) {
  static const std::vector<std::string> required{"format",        "version",       "count",       "trials",
                                                 "channels",      "samples",       "sampling_rate",
                                                 "channel_names", "concept_ids",   "image_indices"};
  std::map<std::string, std::string> fields;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto colon = t.find(':');
    if (colon == std::string::npos) {
      throw ParseError("metadata line " + std::to_string(line_no) + " has no 'key: value' separator: '" + t + "'");
    }
    const std::string key = trim(t.substr(0, colon));
    if (std::find(required.begin(), required.end(), key) == required.end()) {
      throw ParseError("metadata line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (fields.count(key)) throw ParseError("metadata key '" + key + "' appears twice");
    fields[key] = trim(t.substr(colon + 1));
  }
  for (const auto& key : required) {
    if (!fields.count(key)) throw ParseError("metadata is missing required key '" + key + "'");
  }

  ArrayMetadata meta;
  meta.format = fields["format"];
  if (meta.format != "mb2l-f16") throw ParseError("unsupported array format '" + meta.format + "'");
  meta.version = static_cast<int>(parse_int("version", fields["version"]));
  if (meta.version != 1) throw ParseError("unsupported metadata version " + std::to_string(meta.version));
  meta.count = parse_int("count", fields["count"]);
  meta.trials = parse_int("trials", fields["trials"]);
  meta.channels = parse_int("channels", fields["channels"]);
  meta.samples = parse_int("samples", fields["samples"]);
  meta.sampling_rate = parse_double("sampling_rate", fields["sampling_rate"]);
  meta.channel_names = split(fields["channel_names"]);
  for (const auto& v : split(fields["concept_ids"])) meta.concept_ids.push_back(static_cast<int>(parse_int("concept_ids", v)));
  for (const auto& v : split(fields["image_indices"]))
    meta.image_indices.push_back(static_cast<int>(parse_int("image_indices", v)));

  if (meta.count < 0 || meta.trials < 0 || meta.channels < 0 || meta.samples < 0) {
    throw ParseError("metadata shape entries must be non-negative");
  }
  if (meta.count > 0 && (meta.trials < 1 || meta.channels < 1 || meta.samples < 1)) {
    throw ParseError("metadata trials, channels and samples must be >= 1 for a non-empty array");
  }
  if (static_cast<Index>(meta.channel_names.size()) != meta.channels) {
    throw ParseError("metadata lists " + std::to_string(meta.channel_names.size()) + " channel names but channels = " +
                     std::to_string(meta.channels));
  }
  if (static_cast<Index>(meta.concept_ids.size()) != meta.count ||
      static_cast<Index>(meta.image_indices.size()) != meta.count) {
    throw ParseError("metadata concept_ids/image_indices lengths disagree with count = " + std::to_string(meta.count));
  }
  return meta;
}

void write_things_format(const fs::path& root, const Dataset& dataset) {
  std::set<int> subjects;
  for (const auto& s : dataset.train) subjects.insert(s.subject_id);
  for (const auto& s : dataset.test) subjects.insert(s.subject_id);
  require(!subjects.empty(), "cannot write an empty dataset");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw std::runtime_error("cannot create " + root.string() + ": " + ec.message());

  for (int subject : subjects) {
    const fs::path dir = root / "data" / std::to_string(subject);
    fs::create_directories(dir);
    write_split(dir, "train", filter_subject(dataset.train, subject), dataset.channel_names);
    write_split(dir, "test", filter_subject(dataset.test, subject), dataset.channel_names);
  }
  std::set<std::pair<int, int>> written;
  for (const auto* split : {&dataset.train, &dataset.test}) {
    for (const auto& s : *split) {
      if (!written.insert({s.concept_id, s.image_index}).second) continue;
      write_png(root / "images" / std::to_string(s.concept_id) / (std::to_string(s.image_index) + ".png"), s.image);
    }
  }
}

Dataset load_things_format(const fs::path& root, const LoadOptions& options) {
  const fs::path data_root = root / "data";
  if (!fs::is_directory(data_root)) throw ParseError("no data directory under " + root.string());
  std::vector<int> subjects;
  for (const auto& entry : fs::directory_iterator(data_root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) subjects.push_back(std::stoi(name));
  }
  std::sort(subjects.begin(), subjects.end());
  if (subjects.empty()) throw ParseError("no subject directories under " + data_root.string());
  int subject = options.subject;
  if (subject < 0) {
    subject = subjects.front();
  } else if (std::find(subjects.begin(), subjects.end(), subject) == subjects.end()) {
    throw InvalidParameter("subject " + std::to_string(subject) + " not found under " + data_root.string());
  }

  const fs::path dir = data_root / std::to_string(subject);
  Dataset ds;
  std::vector<std::string> test_names;
  ds.train = read_split(root, dir, "train", subject, options, ds.channel_names);
  ds.test = read_split(root, dir, "test", subject, options, test_names);
  assert_zero_shot(ds.train, ds.test);
  for (const auto& s : ds.train) ds.split.train_concepts.insert(s.concept_id);
  for (const auto& s : ds.test) ds.split.test_concepts.insert(s.concept_id);
  if (!ds.train.empty()) {
    ds.split.trials_per_image = static_cast<int>(std::max<std::size_t>(1, ds.train.front().trials.size()));
    int max_index = 0;
    for (const auto& s : ds.train) max_index = std::max(max_index, s.image_index);
    ds.split.images_per_concept = max_index + 1;
  }
  return ds;
}

void write_precomputed_features(const fs::path& path, const PrecomputedFeatures& features) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Index r = 0; r < features.values.rows(); ++r) {
    for (Index c = 0; c < features.values.cols(); ++c) {
      const float v = features.values(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  std::ostringstream meta;
  meta << "count: " << features.values.rows() << "\ndim: " << features.values.cols() << "\nsource: " << features.source
       << "\n";
  write_text(fs::path(path.string() + ".meta"), meta.str());
}

PrecomputedFeatures read_precomputed_features(const fs::path& path) {
  std::istringstream meta(read_text(fs::path(path.string() + ".meta")));
  std::map<std::string, std::string> fields;
  std::string line;
  while (std::getline(meta, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    fields[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  if (!fields.count("count") || !fields.count("dim")) throw ParseError("feature sidecar needs count and dim");
  const Index rows = parse_int("count", fields["count"]);
  const Index cols = parse_int("dim", fields["dim"]);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  PrecomputedFeatures f;
  f.source = fields["source"];
  f.values.resize(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) in.read(reinterpret_cast<char*>(&f.values(r, c)), sizeof(float));
  if (!in) throw ParseError(path.string() + " is shorter than its sidecar declares");
  return f;
}

}  // namespace mb2l
