#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdl/coupling.hpp"
#include "cdl/linalg.hpp"

namespace cdl {

struct ScoreMatrix {
  Matrix scores;  // probes x gallery, higher is more similar
  std::vector<int> probe_labels;
  std::vector<int> gallery_labels;
};

// Cosine similarity between length-normalized rows. Throws NumericError naming
// the first zero-norm row.
ScoreMatrix score(const Matrix& probes, std::span<const int> probe_labels, const Matrix& gallery,
                  std::span<const int> gallery_labels);

// Fraction of probes whose best gallery entry (lowest index on ties) has the
// probe's label. Throws DataError if a probe label is missing from the gallery.
double rank1(const ScoreMatrix& scores);

struct RocPoint {
  double threshold = 0.0;  // accept when score >= threshold
  double far = 0.0;
  double vr = 0.0;
};

struct VrAtFar {
  double far_target = 0.0;
  double vr = 0.0;
  double far = 0.0;        // empirical FAR at the chosen threshold
  double threshold = 0.0;
};

struct RocResult {
  std::vector<RocPoint> curve;  // thresholds descending, far ascending
  std::vector<VrAtFar> at_far;
  std::size_t genuine = 0;
  std::size_t impostor = 0;
};

// Sweeps every distinct score. VR at a target FAR is read at the lowest
// threshold whose empirical FAR stays <= target, without interpolation.
// Throws DataError without genuine or impostor pairs.
RocResult roc(const ScoreMatrix& scores, std::span<const double> far_points);

// How sigma_inter is averaged over class means.
enum class InterNormalization {
  samples,  // 1/N, the form the diagnostics are defined with
  classes,  // 1/c, the conventional LDA form
};

struct VarianceStats {
  double intra = 0.0;
  double inter = 0.0;
};

// sigma_intra = (1/c) sum_i (1/N_i) sum_{x in X_i} |x - mean_i|^2
// sigma_inter = (1/N) sum_i |mean_i - mean|^2   (or 1/c)
// Needs at least two classes.
VarianceStats variance_analysis(const Matrix& embeddings, std::span<const int> labels,
                                InterNormalization norm = InterNormalization::samples);

struct VariancePoint {
  int dim = 0;
  VarianceStats stats;
};

// Projects onto the top-d principal components of the embeddings themselves
// for each requested d, then runs variance_analysis. d must lie in
// [1, min(embedding dim, N - 1)].
std::vector<VariancePoint> variance_curve(const Matrix& embeddings, std::span<const int> labels,
                                          std::span<const int> dims,
                                          InterNormalization norm = InterNormalization::samples);

struct EvalReport {
  double rank1 = 0.0;
  RocResult roc;
  std::vector<VariancePoint> sigma_curve;
  VarianceStats sigma_full;
  CorrelationResult correlation;
  double correlation_cross_block = 0.0;
  std::size_t probes = 0;
  std::size_t gallery = 0;
};

// report.txt, roc.csv, sigma.csv and correlation.csv under dir.
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);
std::string format_report(const EvalReport& report);

std::string roc_csv(const RocResult& roc);
std::string sigma_csv(std::span<const VariancePoint> curve);
// Row-major, full precision. Undefined columns are listed in a leading
// comment line.
std::string correlation_csv(const CorrelationResult& corr);

}  // namespace cdl
