#ifndef MB2L_TESTS_SUPPORT_HPP
#define MB2L_TESTS_SUPPORT_HPP

// Shared helpers for unit and acceptance tests: central-difference gradient
// checks, random tensors and scratch directories.

#include "mb2l/core.hpp"
#include "mb2l/nn.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mb2l::testing {

struct GradCheckReport {
  double worst = 0.0;  // largest relative error seen
  std::string where;
  long checked = 0;
  long skipped = 0;  // stencil straddled a ReLU kink

  void merge(const GradCheckReport& other) {
    if (other.worst > worst) {
      worst = other.worst;
      where = other.where;
    }
    checked += other.checked;
    skipped += other.skipped;
  }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning round-off into large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct NamedTensor {
  std::string name;
  Matrix<double>* value;
  const Matrix<double>* analytic;
};

using KinkPattern = std::function<std::vector<bool>()>;

/// Central differences of `loss` for every entry (or every `stride`-th entry)
/// of each tensor, compared with the analytic gradient. When `pattern`
/// reports ReLU signs, entries whose +-step evaluations change any sign are
/// skipped: the difference quotient then spans a kink.
inline GradCheckReport grad_check(const std::vector<NamedTensor>& tensors, const std::function<double()>& loss,
                                  double step = 1e-4, Index stride = 1, const KinkPattern& pattern = {}) {
  GradCheckReport report;
  const std::vector<bool> base = pattern ? pattern() : std::vector<bool>{};
  for (const auto& t : tensors) {
    Matrix<double>& p = *t.value;
    for (Index k = 0; k < p.size(); k += std::max<Index>(1, stride)) {
      const double saved = p(k);
      bool kink = false;
      p(k) = saved + step;
      const double up = loss();
      if (pattern) kink = pattern() != base;
      p(k) = saved - step;
      const double down = loss();
      if (pattern && !kink) kink = pattern() != base;
      p(k) = saved;
      if (kink) {
        ++report.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error((*t.analytic)(k), numeric);
      ++report.checked;
      if (err > report.worst) {
        report.worst = err;
        std::ostringstream where;
        where << t.name << "[" << k << "] analytic " << (*t.analytic)(k) << " numeric " << numeric;
        report.where = where.str();
      }
    }
  }
  return report;
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
  Matrix<Scalar> m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m(i) = Scalar(dist(rng));
  return m;
}

template <typename Scalar>
ImageGrid<Scalar> random_image(Index h, Index w, Index c, Rng& rng) {
  ImageGrid<Scalar> img(h, w, c);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < img.data.size(); ++i) img.data(i) = Scalar(dist(rng));
  return img;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("mb2l_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace mb2l::testing

#endif  // MB2L_TESTS_SUPPORT_HPP
