#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdl/linalg.hpp"
#include "cdl/modality.hpp"

namespace cdl {

// Row indices into a batch. The anchor and negative share a modality, the
// positive comes from the other one; anchor and positive share a label.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  bool operator==(const Triplet&) const = default;
  auto operator<=>(const Triplet&) const = default;
};

struct RankingConfig {
  double margin = 0.5;
  std::size_t max_triplets_per_anchor = 4;
};

struct TripletLossResult {
  double loss = 0.0;
  Matrix d_embeddings;
  std::size_t active = 0;  // triplets with a positive hinge
};

// Mean over triplets of max(0, margin + |a - p|^2 - |a - n|^2). An empty
// triplet list gives zero loss and zero gradient. Expects unit-length rows.
TripletLossResult triplet_loss(const Matrix& embeddings, std::span<const Triplet> triplets,
                               double margin);

// Semi-hard cross-modal mining on the given (already normalized) embeddings.
// Keeps triplets with d(a,p) < d(a,n) < d(a,p) + margin, at most
// max_triplets_per_anchor per anchor, hardest first. Ties go to the lower
// negative label, then the lower negative index, then the lower positive
// index. Output is grouped by ascending anchor.
std::vector<Triplet> mine_triplets(const Matrix& embeddings, std::span<const int> labels,
                                   std::span<const Modality> modalities,
                                   const RankingConfig& config);

// Squared Euclidean distance between two rows.
double squared_distance(const Matrix& embeddings, std::size_t i, std::size_t j);

// Row-wise L2 normalization and its backward pass. Throws NumericError on a
// zero row.
Matrix normalize_rows(const Matrix& x);
Matrix normalize_rows_backward(const Matrix& x, const Matrix& grad_normalized);

}  // namespace cdl
