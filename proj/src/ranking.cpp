#include "cdl/ranking.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "cdl/error.hpp"

namespace cdl {

double squared_distance(const Matrix& embeddings, std::size_t i, std::size_t j) {
  double d = 0.0;
  const auto ri = static_cast<Eigen::Index>(i);
  const auto rj = static_cast<Eigen::Index>(j);
  for (Eigen::Index c = 0; c < embeddings.cols(); ++c) {
    const double diff = embeddings(ri, c) - embeddings(rj, c);
    d += diff * diff;
  }
  return d;
}

TripletLossResult triplet_loss(const Matrix& embeddings, std::span<const Triplet> triplets,
                               double margin) {
  TripletLossResult out;
  out.d_embeddings = Matrix::Zero(embeddings.rows(), embeddings.cols());
  if (triplets.empty()) return out;
  const auto n = static_cast<std::size_t>(embeddings.rows());
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (const Triplet& t : triplets) {
    if (t.anchor >= n || t.positive >= n || t.negative >= n) {
      throw std::out_of_range("triplet_loss: triplet index outside batch of " +
                              std::to_string(n));
    }
    const double hinge = margin + squared_distance(embeddings, t.anchor, t.positive) -
                         squared_distance(embeddings, t.anchor, t.negative);
    if (hinge <= 0.0) continue;
    ++out.active;
    out.loss += hinge;
    const auto a = static_cast<Eigen::Index>(t.anchor);
    const auto p = static_cast<Eigen::Index>(t.positive);
    const auto ng = static_cast<Eigen::Index>(t.negative);
    const Eigen::RowVectorXd to_pos = embeddings.row(a) - embeddings.row(p);
    const Eigen::RowVectorXd to_neg = embeddings.row(a) - embeddings.row(ng);
    out.d_embeddings.row(a) += 2.0 * scale * (to_pos - to_neg);
    out.d_embeddings.row(p) -= 2.0 * scale * to_pos;
    out.d_embeddings.row(ng) += 2.0 * scale * to_neg;
  }
  out.loss *= scale;
  return out;
}

std::vector<Triplet> mine_triplets(const Matrix& embeddings, std::span<const int> labels,
                                   std::span<const Modality> modalities,
                                   const RankingConfig& config) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n || modalities.size() != n) {
    throw DataError("mine_triplets: label/modality counts do not match the batch");
  }
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = squared_distance(embeddings, i, j);
    }
  }

  struct Candidate {
    double hardness;
    int negative_label;
    std::size_t negative;
    std::size_t positive;
  };
  std::vector<Triplet> out;
  std::vector<Candidate> candidates;
  for (std::size_t a = 0; a < n; ++a) {
    candidates.clear();
    for (std::size_t p = 0; p < n; ++p) {
      if (modalities[p] == modalities[a] || labels[p] != labels[a]) continue;
      const double d_ap = dist[a * n + p];
      for (std::size_t ng = 0; ng < n; ++ng) {
        if (modalities[ng] != modalities[a] || labels[ng] == labels[a]) continue;
        const double d_an = dist[a * n + ng];
        if (d_ap < d_an && d_ap + config.margin > d_an) {
          candidates.push_back({config.margin + d_ap - d_an, labels[ng], ng, p});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.hardness != y.hardness) return x.hardness > y.hardness;
      if (x.negative_label != y.negative_label) return x.negative_label < y.negative_label;
      if (x.negative != y.negative) return x.negative < y.negative;
      return x.positive < y.positive;
    });
    const std::size_t keep = std::min(candidates.size(), config.max_triplets_per_anchor);
    for (std::size_t k = 0; k < keep; ++k) {
      out.push_back({a, candidates[k].positive, candidates[k].negative});
    }
  }
  return out;
}

Matrix normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0)) {
      throw NumericError("normalize_rows: row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) /= norm;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& x, const Matrix& grad_normalized) {
  // d(x/|x|) = (I - u u^T) dx / |x| with u = x / |x|.
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0)) {
      throw NumericError("normalize_rows_backward: row " + std::to_string(i) +
                         " has zero norm");
    }
    const Eigen::RowVectorXd u = x.row(i) / norm;
    const Eigen::RowVectorXd g = grad_normalized.row(i);
    out.row(i) = (g - g.dot(u) * u) / norm;
  }
  return out;
}

}  // namespace cdl
