#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <random>
#include <vector>

#include "cdl/data.hpp"
#include "cdl/linalg.hpp"
#include "cdl/modality.hpp"
#include "cdl/rng.hpp"

namespace cdl::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  }
  return m;
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// |a - b| / max(|a|, |b|), with a floor so two zero gradients compare equal.
inline double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Central differences of f with respect to every entry of x.
template <typename F>
Matrix numeric_gradient(F&& f, Matrix& x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = f();
      x(r, c) = keep - h;
      const double down = f();
      x(r, c) = keep;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

template <typename F>
Vector numeric_gradient(F&& f, Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f();
    x(i) = keep - h;
    const double down = f();
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// p identities with k samples in each modality, labels drawn from [0, classes).
struct ToyBatch {
  Matrix x;
  std::vector<int> labels;
  std::vector<Modality> modalities;
};

inline ToyBatch toy_batch(int p, int k, int dim, int classes, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(classes));
  for (int i = 0; i < classes; ++i) ids[static_cast<std::size_t>(i)] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  ToyBatch b;
  b.x = random_matrix(2 * p * k, dim, rng);
  for (int i = 0; i < p; ++i) {
    for (Modality m : {Modality::nir, Modality::vis}) {
      for (int j = 0; j < k; ++j) {
        b.labels.push_back(ids[static_cast<std::size_t>(i)]);
        b.modalities.push_back(m);
      }
    }
  }
  return b;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cdl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Batch to_batch(const ToyBatch& t) { return {t.x, t.labels, t.modalities}; }

}  // namespace cdl::testing
