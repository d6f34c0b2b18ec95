#include "cdl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cdl/error.hpp"
#include "cdl/text.hpp"

namespace cdl {

namespace {

Matrix unit_rows(const Matrix& x, const char* which) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (!(n > 0.0)) {
      throw NumericError(std::string("score: ") + which + " embedding " + std::to_string(i) +
                         " has zero norm");
    }
    out.row(i) /= n;
  }
  return out;
}

}  // namespace

ScoreMatrix score(const Matrix& probes, std::span<const int> probe_labels, const Matrix& gallery,
                  std::span<const int> gallery_labels) {
  if (probes.cols() != gallery.cols()) {
    throw DataError("score: probe width " + std::to_string(probes.cols()) +
                    " != gallery width " + std::to_string(gallery.cols()));
  }
  if (probe_labels.size() != static_cast<std::size_t>(probes.rows()) ||
      gallery_labels.size() != static_cast<std::size_t>(gallery.rows())) {
    throw DataError("score: label counts do not match embedding rows");
  }
  ScoreMatrix out;
  out.scores = unit_rows(probes, "probe") * unit_rows(gallery, "gallery").transpose();
  out.probe_labels.assign(probe_labels.begin(), probe_labels.end());
  out.gallery_labels.assign(gallery_labels.begin(), gallery_labels.end());
  return out;
}

double rank1(const ScoreMatrix& s) {
  const std::set<int> known(s.gallery_labels.begin(), s.gallery_labels.end());
  const Eigen::Index probes = s.scores.rows();
  if (probes == 0) throw DataError("rank1: no probes");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < probes; ++i) {
    const int label = s.probe_labels[static_cast<std::size_t>(i)];
    if (!known.count(label)) {
      throw DataError("rank1: probe " + std::to_string(i) + " has label " +
                      std::to_string(label) + " absent from the gallery");
    }
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < s.scores.cols(); ++j) {
      if (s.scores(i, j) > s.scores(i, best)) best = j;
    }
    if (s.gallery_labels[static_cast<std::size_t>(best)] == label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probes);
}

RocResult roc(const ScoreMatrix& s, std::span<const double> far_points) {
  std::vector<double> genuine, impostor;
  for (Eigen::Index i = 0; i < s.scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.scores.cols(); ++j) {
      const bool same = s.probe_labels[std::size_t(i)] == s.gallery_labels[std::size_t(j)];
      (same ? genuine : impostor).push_back(s.scores(i, j));
    }
  }
  if (genuine.empty()) throw DataError("roc: no genuine pairs");
  if (impostor.empty()) throw DataError("roc: no impostor pairs");
  std::sort(genuine.begin(), genuine.end(), std::greater<>());
  std::sort(impostor.begin(), impostor.end(), std::greater<>());

  std::vector<double> thresholds(genuine);
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocResult out;
  out.genuine = genuine.size();
  out.impostor = impostor.size();
  const double ng = static_cast<double>(genuine.size());
  const double ni = static_cast<double>(impostor.size());
  std::size_t g = 0, im = 0;
  out.curve.reserve(thresholds.size());
  for (double t : thresholds) {
    while (g < genuine.size() && genuine[g] >= t) ++g;
    while (im < impostor.size() && impostor[im] >= t) ++im;
    out.curve.push_back({t, static_cast<double>(im) / ni, static_cast<double>(g) / ng});
  }

  for (double target : far_points) {
    VrAtFar v{target, 0.0, 0.0, std::numeric_limits<double>::infinity()};
    for (const RocPoint& p : out.curve) {
      if (p.far > target) break;
      v.vr = p.vr;
      v.far = p.far;
      v.threshold = p.threshold;
    }
    out.at_far.push_back(v);
  }
  return out;
}

VarianceStats variance_analysis(const Matrix& x, std::span<const int> labels,
                                InterNormalization norm) {
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw DataError("variance_analysis: label count does not match embedding rows");
  }
  std::map<int, std::vector<Eigen::Index>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    classes[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  if (classes.size() < 2) {
    throw DataError("variance_analysis: need at least two classes, got " +
                    std::to_string(classes.size()));
  }
  const Eigen::RowVectorXd grand = x.colwise().mean();
  VarianceStats out;
  for (const auto& [label, rows] : classes) {
    const Matrix members = x(rows, Eigen::all);
    const Eigen::RowVectorXd mean = members.colwise().mean();
    out.intra += (members.rowwise() - mean).squaredNorm() / static_cast<double>(rows.size());
    out.inter += (mean - grand).squaredNorm();
  }
  out.intra /= static_cast<double>(classes.size());
  out.inter /= norm == InterNormalization::samples ? static_cast<double>(x.rows())
                                                   : static_cast<double>(classes.size());
  return out;
}

std::vector<VariancePoint> variance_curve(const Matrix& x, std::span<const int> labels,
                                          std::span<const int> dims, InterNormalization norm) {
  const Eigen::Index max_dim = std::min<Eigen::Index>(x.cols(), x.rows() - 1);
  for (int d : dims) {
    if (d < 1 || d > max_dim) {
      throw DataError("variance_curve: dimension " + std::to_string(d) + " outside [1, " +
                      std::to_string(max_dim) + "]");
    }
  }
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  const SymmetricEigen eig = symmetric_eigen(symmetrize(cov));
  // Components by decreasing variance.
  const Matrix basis = eig.vectors.rowwise().reverse();
  std::vector<VariancePoint> out;
  for (int d : dims) {
    const Matrix projected = centered * basis.leftCols(d);
    out.push_back({d, variance_analysis(projected, labels, norm)});
  }
  return out;
}

std::string roc_csv(const RocResult& roc) {
  std::string out = "threshold,far,vr\n";
  for (const RocPoint& p : roc.curve) {
    append_double(out, p.threshold);
    out += ',';
    append_double(out, p.far);
    out += ',';
    append_double(out, p.vr);
    out += '\n';
  }
  return out;
}

std::string sigma_csv(std::span<const VariancePoint> curve) {
  std::string out = "dim,sigma_intra,sigma_inter\n";
  for (const VariancePoint& p : curve) {
    out += std::to_string(p.dim);
    out += ',';
    append_double(out, p.stats.intra);
    out += ',';
    append_double(out, p.stats.inter);
    out += '\n';
  }
  return out;
}

std::string correlation_csv(const CorrelationResult& corr) {
  std::string out;
  bool any = false;
  for (std::size_t i = 0; i < corr.undefined.size(); ++i) {
    if (!corr.undefined[i]) continue;
    out += any ? "," : "# undefined columns: ";
    out += std::to_string(i);
    any = true;
  }
  if (any) out += '\n';
  for (Eigen::Index i = 0; i < corr.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < corr.values.cols(); ++j) {
      if (j) out += ',';
      append_double(out, corr.values(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "# cdl eval report v1\n";
  os << "probes = " << r.probes << "\n";
  os << "gallery = " << r.gallery << "\n";
  os << "genuine_pairs = " << r.roc.genuine << "\n";
  os << "impostor_pairs = " << r.roc.impostor << "\n";
  os << "rank1 = " << r.rank1 << "\n";
  for (const VrAtFar& v : r.roc.at_far) {
    os << "vr_at_far[" << v.far_target << "] = " << v.vr << "\n";
  }
  os << "sigma_intra = " << r.sigma_full.intra << "\n";
  os << "sigma_inter = " << r.sigma_full.inter << "\n";
  os << "correlation_cross_block_mean = " << r.correlation_cross_block << "\n";
  return os.str();
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& dir) {
  write_file_atomic(dir / "report.txt", format_report(report));
  write_file_atomic(dir / "roc.csv", roc_csv(report.roc));
  write_file_atomic(dir / "sigma.csv", sigma_csv(report.sigma_curve));
  write_file_atomic(dir / "correlation.csv", correlation_csv(report.correlation));
}

}  // namespace cdl
