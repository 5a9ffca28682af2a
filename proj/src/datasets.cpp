#include "mb2l/datasets.hpp"

#include "mb2l/eeg_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace mb2l {

namespace {

using Rng64 = std::mt19937_64;

double uniform(Rng64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool inside_shape(ShapeKind shape, double u, double v) {
  switch (shape) {
    case ShapeKind::circle:
      return u * u + v * v <= 1.0;
    case ShapeKind::square:
      return std::max(std::abs(u), std::abs(v)) <= 0.85;
    case ShapeKind::triangle:
      return v <= 0.75 && std::abs(u) <= (v + 0.95) * 0.6;
    case ShapeKind::diamond:
      return std::abs(u) + std::abs(v) <= 1.0;
    case ShapeKind::ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case ShapeKind::cross:
      return (std::abs(u) <= 0.32 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.32 && std::abs(u) <= 1.0);
  }
  return false;
}

bool is_low_channel(const std::string& name) { return low_level_channels().count(name) > 0; }
bool is_high_channel(const std::string& name) { return high_level_channels().count(name) > 0; }

// Smooth temporal response peaking at `latency` (fraction of the epoch).
Vector<double> bump(int samples, double latency, double width, double phase) {
  Vector<double> b(samples);
  for (int t = 0; t < samples; ++t) {
    const double x = (t + 0.5) / samples;
    const double env = std::exp(-0.5 * std::pow((x - latency) / width, 2.0));
    b(t) = env * std::cos(2.0 * std::numbers::pi * 3.0 * (x - latency) + phase);
  }
  return b / std::max(1e-12, b.norm() / std::sqrt(static_cast<double>(samples)));
}

void validate(const SyntheticConfig& cfg) {
  require(cfg.train_concepts >= 1, "train concept count must be >= 1");
  require(cfg.test_concepts >= 1, "test concept count must be >= 1");
  require(cfg.channels >= 1, "channel count must be >= 1");
  require(cfg.samples >= 1, "sample count must be >= 1");
  require(std::isfinite(cfg.noise_sigma) && cfg.noise_sigma >= 0.0, "noise sigma must be finite and >= 0");
  require(cfg.images_per_concept >= 1, "images per concept must be >= 1");
  require(cfg.train_trials >= 1 && cfg.test_trials >= 1, "trial counts must be >= 1");
  require(cfg.image_size >= 8, "image size must be >= 8");
  require(cfg.subjects >= 1, "subject count must be >= 1");
  require(cfg.sampling_rate > 0.0, "sampling rate must be positive");
}

}  // namespace

std::vector<std::string> synthetic_montage(int channels) {
  require(channels >= 1, "channel count must be >= 1");
  const auto& visual = visual_montage();
  std::vector<std::string> names;
  for (int c = 0; c < channels; ++c) {
    if (c < static_cast<int>(visual.size())) {
      names.push_back(visual[static_cast<std::size_t>(c)]);
    } else {
      names.push_back("E" + std::to_string(c + 1));
    }
  }
  return names;
}

// Templates are a sum of feature-locked responses. Low-level attributes
// (color, size, position) drive occipital channels early; the shape category
// drives parietal channels late. A small concept-specific residual makes
// every template unique.
std::vector<ConceptSpec> synthetic_concepts(const SyntheticConfig& cfg) {
  validate(cfg);
  Rng64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto names = synthetic_montage(cfg.channels);
  const int C = cfg.channels;
  const int T = cfg.samples;

  constexpr int kLowFeatures = 6;  // r, g, b, size, row offset, col offset
  constexpr int kHighFeatures = kShapeKinds;
  std::vector<Vector<double>> spatial, temporal;
  for (int f = 0; f < kLowFeatures + kHighFeatures; ++f) {
    const bool low = f < kLowFeatures;
    Vector<double> s(C);
    for (int c = 0; c < C; ++c) {
      const auto& n = names[static_cast<std::size_t>(c)];
      const bool on = low ? is_low_channel(n) : is_high_channel(n);
      const bool visual = is_low_channel(n) || is_high_channel(n);
      s(c) = normal(rng) * (on ? 1.0 : (visual ? 0.15 : 0.05));
    }
    spatial.push_back(s);
    const double latency = low ? uniform(rng, 0.15, 0.35) : uniform(rng, 0.45, 0.75);
    temporal.push_back(bump(T, latency, uniform(rng, 0.06, 0.12), uniform(rng, 0.0, 2.0 * std::numbers::pi)));
  }

  const int total = cfg.train_concepts + cfg.test_concepts;
  std::vector<ConceptSpec> concepts;
  concepts.reserve(static_cast<std::size_t>(total));
  for (int id = 0; id < total; ++id) {
    ConceptSpec c;
    c.concept_id = id;
    c.shape = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, kShapeKinds - 1)(rng));
    for (auto& ch : c.color) ch = uniform(rng, 0.1, 0.9);
    c.size = uniform(rng, 0.35, 0.55);
    c.offset_row = uniform(rng, -0.12, 0.12);
    c.offset_col = uniform(rng, -0.12, 0.12);

    std::array<double, kLowFeatures + kHighFeatures> feat{};
    feat[0] = (c.color[0] - 0.5) / 0.23;
    feat[1] = (c.color[1] - 0.5) / 0.23;
    feat[2] = (c.color[2] - 0.5) / 0.23;
    feat[3] = 0.7 * (c.size - 0.45) / 0.058;
    // Position is weakly encoded: a pooled image encoder barely sees it.
    feat[4] = 0.3 * c.offset_row / 0.07;
    feat[5] = 0.3 * c.offset_col / 0.07;
    feat[kLowFeatures + static_cast<int>(c.shape)] = 1.5;

    Matrix<double> tpl = Matrix<double>::Zero(C, T);
    for (std::size_t f = 0; f < feat.size(); ++f) tpl += feat[f] * spatial[f] * temporal[f].transpose();
    tpl /= std::sqrt(static_cast<double>(feat.size()));
    Matrix<double> residual(C, T);
    for (Index k = 0; k < residual.size(); ++k) residual(k) = normal(rng);
    tpl += 0.1 * residual;
    c.eeg_template = tpl.cast<float>();
    concepts.push_back(std::move(c));
  }
  return concepts;
}

ImageGrid<float> render_concept_image(const ConceptSpec& spec, int image_size, std::uint64_t jitter_seed) {
  require(image_size >= 8, "image size must be >= 8");
  Rng64 rng(jitter_seed);
  const int n = image_size;
  const double half = 0.5 * n;
  const double cy = (n - 1) / 2.0 + (spec.offset_row + uniform(rng, -0.02, 0.02)) * half;
  const double cx = (n - 1) / 2.0 + (spec.offset_col + uniform(rng, -0.02, 0.02)) * half;
  const double radius = spec.size * uniform(rng, 0.95, 1.05) * half;

  struct Blob {
    double row, col, radius;
    std::array<double, 3> color;
  };
  std::vector<Blob> clutter;
  for (int b = 0; b < 3; ++b) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dist = uniform(rng, 0.8, 0.95) * half;
    clutter.push_back({(n - 1) / 2.0 + dist * std::sin(angle), (n - 1) / 2.0 + dist * std::cos(angle),
                       uniform(rng, 0.03, 0.06) * n,
                       {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)}});
  }
  const double tilt_r = uniform(rng, -0.08, 0.08);
  const double tilt_c = uniform(rng, -0.08, 0.08);

  ImageGrid<float> img(n, n, 3);
  constexpr int kSuper = 2;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (int sr = 0; sr < kSuper; ++sr) {
        for (int sc = 0; sc < kSuper; ++sc) {
          const double y = r + (sr + 0.5) / kSuper - 0.5;
          const double x = c + (sc + 0.5) / kSuper - 0.5;
          std::array<double, 3> px;
          const double bg = 0.5 + tilt_r * (y / n - 0.5) + tilt_c * (x / n - 0.5);
          px = {bg, bg, bg};
          for (const auto& blob : clutter) {
            if (std::hypot(y - blob.row, x - blob.col) <= blob.radius) px = blob.color;
          }
          if (inside_shape(spec.shape, (x - cx) / radius, (y - cy) / radius)) px = spec.color;
          for (int ch = 0; ch < 3; ++ch) acc[static_cast<std::size_t>(ch)] += px[static_cast<std::size_t>(ch)];
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        img(r, c, ch) = static_cast<float>(std::clamp(acc[static_cast<std::size_t>(ch)] / (kSuper * kSuper), 0.0, 1.0));
      }
    }
  }
  return img;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  const auto concepts = synthetic_concepts(cfg);
  const auto names = synthetic_montage(cfg.channels);
  const int C = cfg.channels;

  Dataset ds;
  ds.channel_names = names;
  for (int id = 0; id < cfg.train_concepts; ++id) ds.split.train_concepts.insert(id);
  for (int id = cfg.train_concepts; id < cfg.train_concepts + cfg.test_concepts; ++id) ds.split.test_concepts.insert(id);
  ds.split.images_per_concept = cfg.images_per_concept;
  ds.split.trials_per_image = cfg.train_trials;

  // Images are shared by every subject.
  std::map<std::pair<int, int>, ImageGrid<float>> images;
  auto image_for = [&](const ConceptSpec& c, int idx) -> const ImageGrid<float>& {
    auto key = std::make_pair(c.concept_id, idx);
    auto it = images.find(key);
    if (it == images.end()) {
      const std::uint64_t jitter = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(c.concept_id) * 131ULL +
                                   static_cast<std::uint64_t>(idx);
      it = images.emplace(key, render_concept_image(c, cfg.image_size, jitter)).first;
    }
    return it->second;
  };

  for (int s = 0; s < cfg.subjects; ++s) {
    Rng64 rng(cfg.seed * 7919ULL + static_cast<std::uint64_t>(s) * 104729ULL + 17ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<double> mixing = Matrix<double>::Identity(C, C);
    if (s > 0) {
      for (Index k = 0; k < mixing.size(); ++k) mixing(k) += 0.15 * normal(rng) / std::sqrt(static_cast<double>(C));
    }
    for (const auto& spec : concepts) {
      const bool train = spec.concept_id < cfg.train_concepts;
      const int n_images = train ? cfg.images_per_concept : 1;
      const int n_trials = train ? cfg.train_trials : cfg.test_trials;
      const Matrix<double> clean = mixing * spec.eeg_template.cast<double>();
      for (int idx = 0; idx < n_images; ++idx) {
        PairedSample sample;
        sample.image = image_for(spec, idx);
        sample.concept_id = spec.concept_id;
        sample.subject_id = s;
        sample.image_index = idx;
        std::vector<EEGEpoch<float>> trials;
        for (int t = 0; t < n_trials; ++t) {
          Matrix<double> x = clean;
          if (cfg.noise_sigma > 0.0) {
            for (Index k = 0; k < x.size(); ++k) x(k) += cfg.noise_sigma * normal(rng);
          }
          trials.push_back({x.cast<float>(), names, cfg.sampling_rate});
          sample.trials.push_back(trials.back().data);
        }
        sample.epoch = average_repetitions(trials);
        (train ? ds.train : ds.test).push_back(std::move(sample));
      }
    }
  }
  return ds;
}

Dataset generate_synthetic(int train_concepts, int test_concepts, int channels, int samples, double noise_sigma,
                           std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.train_concepts = train_concepts;
  cfg.test_concepts = test_concepts;
  cfg.channels = channels;
  cfg.samples = samples;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

std::pair<std::vector<PairedSample>, std::vector<PairedSample>> hold_out_last_image(
    const std::vector<PairedSample>& samples) {
  std::map<std::pair<int, int>, int> last;  // (subject, spec) -> max image index
  for (const auto& s : samples) {
    auto key = std::make_pair(s.subject_id, s.concept_id);
    auto it = last.find(key);
    if (it == last.end() || s.image_index > it->second) last[key] = s.image_index;
  }
  std::map<std::pair<int, int>, int> count;
  for (const auto& s : samples) ++count[{s.subject_id, s.concept_id}];

  std::vector<PairedSample> keep, held;
  for (const auto& s : samples) {
    const auto key = std::make_pair(s.subject_id, s.concept_id);
    if (count[key] > 1 && s.image_index == last[key]) {
      held.push_back(s);
    } else {
      keep.push_back(s);
    }
  }
  return {std::move(keep), std::move(held)};
}

void assert_zero_shot(const std::vector<PairedSample>& train, const std::vector<PairedSample>& test) {
  std::set<int> seen;
  for (const auto& s : train) seen.insert(s.concept_id);
  for (const auto& s : test) {
    if (seen.count(s.concept_id)) {
      throw InvalidParameter("zero-shot violation: concept " + std::to_string(s.concept_id) +
                             " appears in both train and test sets");
    }
  }
}

std::vector<PairedSample> filter_subject(const std::vector<PairedSample>& samples, int subject_id) {
  std::vector<PairedSample> out;
  for (const auto& s : samples)
    if (s.subject_id == subject_id) out.push_back(s);
  return out;
}

}  // namespace mb2l
