#include "mb2l/evaluator.hpp"

#include "mb2l/datasets.hpp"
#include "mb2l/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

namespace mb2l {

void validate_spec(const AblationSpec& spec) {
  if (spec.abvp && !spec.mbcl) {
    throw InvalidParameter("ablation spec '" + spec.name +
                           "': the adaptive blur needs the multi-level alignment (abvp on requires mbcl on)");
  }
}

std::vector<AblationSpec> core_ablation_grid() {
  // ABVP off uses the untouched image, so no degradation is applied there.
  return {
      {"none", false, false, false, Degradation::none, PriorKind::logistic},
      {"bvfe", false, true, false, Degradation::none, PriorKind::logistic},
      {"mbcl", false, false, true, Degradation::none, PriorKind::logistic},
      {"abvp+mbcl", true, false, true, Degradation::blur, PriorKind::logistic},
      {"bvfe+mbcl", false, true, true, Degradation::none, PriorKind::logistic},
      {"full", true, true, true, Degradation::blur, PriorKind::logistic},
  };
}

ModelConfig apply_spec(ModelConfig base, const AblationSpec& spec) {
  validate_spec(spec);
  base.abvp = spec.abvp;
  base.bvfe = spec.bvfe;
  base.mbcl = spec.mbcl;
  base.degradation = spec.degradation;
  base.prior = spec.prior;
  return base;
}

std::vector<AblationRow> run_ablation_grid(const std::vector<AblationSpec>& specs, const ModelConfig& base_model,
                                           const TrainConfig& base_train, const std::vector<std::uint64_t>& seeds,
                                           const Dataset& data, int jobs, std::ostream* log) {
  for (const auto& spec : specs) validate_spec(spec);
  validate_train_config(base_train);
  require(jobs >= 1, "jobs must be >= 1");
  std::vector<AblationRow> rows(specs.size() * seeds.size());
  if (rows.empty()) return rows;
  require(!data.train.empty() && !data.test.empty(), "ablation needs train and test samples");
  assert_zero_shot(data.train, data.test);
  const auto [fit, val] = hold_out_last_image(data.train);

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&]() {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        const AblationSpec& spec = specs[i / seeds.size()];
        const std::uint64_t seed = seeds[i % seeds.size()];
        const auto t0 = std::chrono::steady_clock::now();
        TrainConfig tc = base_train;
        tc.seed = seed;
        const auto trained = train(apply_spec(base_model, spec), fit, val, tc);
        const auto test = prepare(trained.model, data.test);
        const auto emb = embed(trained.model, test);
        const auto sim = retrieval_similarity(emb, Level::fused, trained.model.cfg.alpha_low,
                                              trained.model.cfg.alpha_high, test.concept_ids);
        const auto metrics = retrieval_metrics(sim);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows[i] = {spec, seed, metrics.top1, metrics.top5, secs};
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << std::left << std::setw(10) << spec.name << " seed " << seed << "  top1 " << std::fixed
               << std::setprecision(4) << metrics.top1 << "  top5 " << metrics.top5 << "  (" << std::setprecision(1)
               << secs << " s)" << std::defaultfloat << std::right << "\n";
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = rows.size();
      }
    }
  };
  const int threads = std::min<int>(jobs, static_cast<int>(rows.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<AblationSummary> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AblationSummary& s) { return s.spec.name == row.spec.name; });
    if (it == out.end()) {
      out.push_back({row.spec, 0, 0.0, 0.0, 0.0, 0.0});
      it = out.end() - 1;
    }
    ++it->runs;
    it->top1_mean += row.top1;
    it->top5_mean += row.top5;
  }
  for (auto& s : out) {
    s.top1_mean /= s.runs;
    s.top5_mean /= s.runs;
    double v1 = 0.0, v5 = 0.0;
    for (const auto& row : rows) {
      if (row.spec.name != s.spec.name) continue;
      v1 += (row.top1 - s.top1_mean) * (row.top1 - s.top1_mean);
      v5 += (row.top5 - s.top5_mean) * (row.top5 - s.top5_mean);
    }
    // Sample standard deviation; zero for a single run.
    s.top1_std = s.runs > 1 ? std::sqrt(v1 / (s.runs - 1)) : 0.0;
    s.top5_std = s.runs > 1 ? std::sqrt(v5 / (s.runs - 1)) : 0.0;
  }
  return out;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  return out;
}

void write_spec_fields(std::ostream& out, const AblationSpec& spec) {
  out << spec.name << "," << spec.abvp << "," << spec.bvfe << "," << spec.mbcl << "," << to_string(spec.degradation)
      << "," << to_string(spec.prior);
}

}  // namespace

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_csv(path);
  out << "name,abvp,bvfe,mbcl,degradation,prior,seed,top1,top5,wall_seconds\n";
  for (const auto& row : rows) {
    write_spec_fields(out, row.spec);
    out << "," << row.seed << "," << row.top1 << "," << row.top5 << "," << row.wall_seconds << "\n";
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<AblationSummary>& summary) {
  auto out = open_csv(path);
  out << "name,abvp,bvfe,mbcl,degradation,prior,runs,top1_mean,top1_std,top5_mean,top5_std\n";
  for (const auto& s : summary) {
    write_spec_fields(out, s.spec);
    out << "," << s.runs << "," << s.top1_mean << "," << s.top1_std << "," << s.top5_mean << "," << s.top5_std << "\n";
  }
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix<float>& sim) {
  auto out = open_csv(path);
  out << "eeg_concept";
  for (int id : sim.col_ids) out << ",image_" << id;
  out << "\n";
  for (Index i = 0; i < sim.scores.rows(); ++i) {
    out << sim.row_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < sim.scores.cols(); ++j) out << "," << sim.scores(i, j);
    out << "\n";
  }
}

}  // namespace mb2l
