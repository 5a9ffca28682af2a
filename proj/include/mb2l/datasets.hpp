#ifndef MB2L_DATASETS_HPP
#define MB2L_DATASETS_HPP

#include "mb2l/core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mb2l {

enum class ShapeKind { circle, square, triangle, diamond, ring, cross };
inline constexpr int kShapeKinds = 6;

/// Latent description of one synthetic concept. Images and EEG templates are
/// both functions of these attributes, so structure learned on training
/// concepts transfers to held-out ones.
struct ConceptSpec {
  int concept_id = 0;
  ShapeKind shape = ShapeKind::circle;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double size = 0.35;  // object radius as a fraction of half the image side
  double offset_row = 0.0;
  double offset_col = 0.0;
  Matrix<float> eeg_template;  // C x T, before subject mixing
};

struct PairedSample {
  ImageGrid<float> image;
  EEGEpoch<float> epoch;  // repetition-averaged
  std::vector<Matrix<float>> trials;  // raw repetitions (may be empty once averaged)
  int concept_id = 0;
  int subject_id = 0;
  int image_index = 0;
};

struct SplitSpec {
  std::set<int> train_concepts;
  std::set<int> test_concepts;
  int trials_per_image = 1;
  int images_per_concept = 1;
};

struct SyntheticConfig {
  int train_concepts = 64;
  int test_concepts = 16;
  int channels = 17;
  int samples = 64;
  double noise_sigma = 0.5;  // per-trial noise amplitude
  std::uint64_t seed = 0;
  int images_per_concept = 4;
  int train_trials = 4;
  int test_trials = 80;
  int image_size = 32;
  int subjects = 1;
  double sampling_rate = 100.0;
};

struct Dataset {
  std::vector<PairedSample> train;
  std::vector<PairedSample> test;
  SplitSpec split;
  std::vector<std::string> channel_names;
};

/// Montage used for a given channel count: the 17 visual electrodes first,
/// then generic names.
std::vector<std::string> synthetic_montage(int channels);

/// Deterministic synthetic paired data with planted cross-modal structure.
Dataset generate_synthetic(const SyntheticConfig& cfg);
Dataset generate_synthetic(int train_concepts, int test_concepts, int channels, int samples, double noise_sigma,
                           std::uint64_t seed);

/// Attribute table for a generator configuration (useful for probes and plotting).
std::vector<ConceptSpec> synthetic_concepts(const SyntheticConfig& cfg);

/// Renders a concept image; `jitter_seed` perturbs placement and clutter per image.
ImageGrid<float> render_concept_image(const ConceptSpec& spec, int image_size, std::uint64_t jitter_seed);

/// Splits off one image per training concept (the last image index) as a
/// held-out validation set.
std::pair<std::vector<PairedSample>, std::vector<PairedSample>> hold_out_last_image(
    const std::vector<PairedSample>& samples);

/// Throws when any concept appears in both sets.
void assert_zero_shot(const std::vector<PairedSample>& train, const std::vector<PairedSample>& test);

std::vector<PairedSample> filter_subject(const std::vector<PairedSample>& samples, int subject_id);

/// Samplewise arithmetic mean of equally shaped trials.
template <typename Scalar>
EEGEpoch<Scalar> average_repetitions(const std::vector<EEGEpoch<Scalar>>& trials) {
  require(!trials.empty(), "average_repetitions needs at least one trial");
  const auto& first = trials.front();
  Matrix<Scalar> acc = Matrix<Scalar>::Zero(first.channels(), first.samples());
  for (const auto& trial : trials) {
    require(trial.data.rows() == acc.rows() && trial.data.cols() == acc.cols(),
            "average_repetitions: trials differ in shape");
    require(trial.channel_names == first.channel_names, "average_repetitions: trials differ in channel list");
    acc += trial.data;
  }
  acc /= Scalar(trials.size());
  return {std::move(acc), first.channel_names, first.sampling_rate};
}

/// Reorders / subsets rows to exactly the wanted channel order.
template <typename Scalar>
EEGEpoch<Scalar> select_channels(const EEGEpoch<Scalar>& epoch, const std::vector<std::string>& wanted) {
  require(!wanted.empty(), "select_channels needs at least one channel");
  EEGEpoch<Scalar> out;
  out.sampling_rate = epoch.sampling_rate;
  out.channel_names = wanted;
  out.data.resize(static_cast<Index>(wanted.size()), epoch.samples());
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    Index src = -1;
    for (std::size_t j = 0; j < epoch.channel_names.size(); ++j) {
      if (epoch.channel_names[j] == wanted[i]) {
        src = static_cast<Index>(j);
        break;
      }
    }
    require(src >= 0, "select_channels: channel '" + wanted[i] + "' is not present in the epoch");
    out.data.row(static_cast<Index>(i)) = epoch.data.row(src);
  }
  return out;
}

// ---- on-disk layout -------------------------------------------------------
//
//   <root>/data/<subject>/{train,test}.f16   little-endian float16,
//                                             [count][trials][channels][samples]
//   <root>/data/<subject>/{train,test}.meta  "key: value" sidecar
//   <root>/images/<concept_id>/<image_idx>.png

struct ArrayMetadata {
  std::string format = "mb2l-f16";
  int version = 1;
  Index count = 0;
  Index trials = 0;
  Index channels = 0;
  Index samples = 0;
  double sampling_rate = 0.0;
  std::vector<std::string> channel_names;
  std::vector<int> concept_ids;
  std::vector<int> image_indices;
};

std::string format_metadata(const ArrayMetadata& meta);
ArrayMetadata parse_metadata(const std::string& text);

/// Writes every subject's train/test arrays and all concept images.
void write_things_format(const std::filesystem::path& root, const Dataset& dataset);

struct LoadOptions {
  int subject = -1;  // -1: first subject directory found
  std::vector<std::string> channels;  // empty: the 17-channel visual montage when available, else all
};

/// Reads arrays (promoting float16 to float32), selects channels, averages
/// repetitions and pairs each sample with its image.
Dataset load_things_format(const std::filesystem::path& root, const LoadOptions& options = {});

/// Per-subject sample counts of the real THINGS-EEG layout after averaging.
inline constexpr Index kThingsEegTrainSamples = 16540;
inline constexpr Index kThingsEegTestSamples = 200;

}  // namespace mb2l

#endif  // MB2L_DATASETS_HPP
