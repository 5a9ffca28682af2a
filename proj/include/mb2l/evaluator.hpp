#ifndef MB2L_EVALUATOR_HPP
#define MB2L_EVALUATOR_HPP

#include "mb2l/alignment.hpp"
#include "mb2l/core.hpp"
#include "mb2l/degradation.hpp"
#include "mb2l/foveation.hpp"
#include "mb2l/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mb2l {

struct Dataset;
struct TrainConfig;
struct SyntheticConfig;

enum class Level { low, high, fused };

inline std::string to_string(Level level) {
  switch (level) {
    case Level::low: return "low";
    case Level::high: return "high";
    case Level::fused: return "fused";
  }
  return "fused";
}

inline Level level_from_string(const std::string& name) {
  if (name == "low") return Level::low;
  if (name == "high") return Level::high;
  if (name == "fused") return Level::fused;
  throw InvalidParameter("unknown level '" + name + "' (expected low, high or fused)");
}

/// scores(i, j) = cosine(eeg_i, image_j); entry (j, j) is the matched pair.
template <typename Scalar>
struct SimilarityMatrix {
  Matrix<Scalar> scores;
  std::vector<int> row_ids;
  std::vector<int> col_ids;
  Level level = Level::fused;
};

template <typename Scalar>
SimilarityMatrix<Scalar> similarity_matrix(const Matrix<Scalar>& eeg, const Matrix<Scalar>& image,
                                           std::vector<int> ids = {}, Level level = Level::fused) {
  require(eeg.cols() == image.cols(), "similarity_matrix: embedding dimensions differ (" + std::to_string(eeg.cols()) +
                                          " vs " + std::to_string(image.cols()) + ")");
  require(eeg.rows() == image.rows(), "similarity_matrix: row counts differ");
  if (ids.empty()) {
    for (Index i = 0; i < eeg.rows(); ++i) ids.push_back(static_cast<int>(i));
  }
  require(static_cast<Index>(ids.size()) == eeg.rows(), "similarity_matrix: id list length differs from row count");
  Vector<Scalar> ne, ni;
  const Matrix<Scalar> u = detail::normalize_rows(eeg, ne);
  const Matrix<Scalar> v = detail::normalize_rows(image, ni);
  SimilarityMatrix<Scalar> sim;
  sim.scores = u * v.transpose();
  sim.row_ids = ids;
  sim.col_ids = ids;
  sim.level = level;
  require(sim.scores.allFinite(), "similarity matrix has non-finite entries");
  return sim;
}

/// Rank of the diagonal entry within its row; equal scores at a lower column
/// index rank ahead.
template <typename Scalar>
Index diagonal_rank(const Matrix<Scalar>& scores, Index row) {
  const Scalar target = scores(row, row);
  Index rank = 0;
  for (Index j = 0; j < scores.cols(); ++j) {
    if (j == row) continue;
    if (scores(row, j) > target || (scores(row, j) == target && j < row)) ++rank;
  }
  return rank;
}

template <typename Scalar>
double top_k_accuracy(const SimilarityMatrix<Scalar>& sim, Index k) {
  const Index n = sim.scores.rows();
  require(n >= 1 && sim.scores.cols() == n, "top-k needs a non-empty square similarity matrix");
  require(k >= 1 && k <= n, "k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
  Index hits = 0;
  for (Index i = 0; i < n; ++i)
    if (diagonal_rank(sim.scores, i) < k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

template <typename Scalar>
SimilarityMatrix<Scalar> fuse_levels(const SimilarityMatrix<Scalar>& low, const SimilarityMatrix<Scalar>& high,
                                     double alpha_low, double alpha_high) {
  require(low.scores.rows() == high.scores.rows() && low.scores.cols() == high.scores.cols(),
          "fuse_levels: similarity matrices differ in shape");
  require(low.row_ids == high.row_ids && low.col_ids == high.col_ids, "fuse_levels: id lists differ");
  SimilarityMatrix<Scalar> out = low;
  out.scores = Scalar(alpha_low) * low.scores + Scalar(alpha_high) * high.scores;
  out.level = Level::fused;
  return out;
}

/// Similarity at one level for a set of embeddings; the fused level uses the
/// training loss weights. Models without a low level fall back to high.
template <typename Scalar>
SimilarityMatrix<Scalar> retrieval_similarity(const EmbeddingSet<Scalar>& emb, Level level, double alpha_low,
                                              double alpha_high, const std::vector<int>& ids = {}) {
  if (!emb.has_low || level == Level::high) {
    auto sim = similarity_matrix(emb.eeg_high, emb.image_high, ids, Level::high);
    if (level == Level::fused) sim.level = Level::fused;
    return sim;
  }
  const auto low = similarity_matrix(emb.eeg_low, emb.image_low, ids, Level::low);
  if (level == Level::low) return low;
  return fuse_levels(low, similarity_matrix(emb.eeg_high, emb.image_high, ids, Level::high), alpha_low, alpha_high);
}

struct RetrievalMetrics {
  Level level = Level::fused;
  double top1 = 0.0;
  double top5 = 0.0;
  Index count = 0;
};

template <typename Scalar>
RetrievalMetrics retrieval_metrics(const SimilarityMatrix<Scalar>& sim) {
  const Index n = sim.scores.rows();
  return {sim.level, top_k_accuracy(sim, 1), top_k_accuracy(sim, std::min<Index>(5, n)), n};
}

// ---- ablation harness -----------------------------------------------------

struct AblationSpec {
  std::string name;
  bool abvp = true;
  bool bvfe = true;
  bool mbcl = true;
  Degradation degradation = Degradation::blur;
  PriorKind prior = PriorKind::logistic;
};

/// Throws when a spec breaks the ABVP-needs-MBCL dependency.
void validate_spec(const AblationSpec& spec);

/// The six component combinations of the core ablation, weakest first.
std::vector<AblationSpec> core_ablation_grid();

/// Overrides the component flags, degradation and prior of a base model config.
ModelConfig apply_spec(ModelConfig base, const AblationSpec& spec);

struct AblationRow {
  AblationSpec spec;
  std::uint64_t seed = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double wall_seconds = 0.0;
};

struct AblationSummary {
  AblationSpec spec;
  int runs = 0;
  double top1_mean = 0.0, top1_std = 0.0;
  double top5_mean = 0.0, top5_std = 0.0;
};

/// Trains and evaluates every spec for every seed on one dataset (which must
/// carry train and zero-shot test samples). `jobs` > 1 runs entries on
/// worker threads; rows come back in (spec, seed) order regardless.
std::vector<AblationRow> run_ablation_grid(const std::vector<AblationSpec>& specs, const ModelConfig& base_model,
                                           const TrainConfig& base_train, const std::vector<std::uint64_t>& seeds,
                                           const Dataset& data, int jobs = 1, std::ostream* log = nullptr);

std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<AblationSummary>& summary);

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix<float>& sim);

}  // namespace mb2l

#endif  // MB2L_EVALUATOR_HPP
