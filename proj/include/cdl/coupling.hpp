#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdl/linalg.hpp"
#include "cdl/modality.hpp"

namespace cdl {

struct HeadsParams {
  double lambda = 1e-3;  // trace-norm strength inside R1
  double alpha1 = 1.0;   // weight of R1 in the relevance loss
  double alpha2 = 1.0;   // weight of R2 in the relevance loss
  double mu = 1e-6;      // ridge that keeps Gamma invertible
  // Weight of the softmax term in the relevance loss. Fixed at 1 in normal
  // use; zero isolates the regularizers.
  double softmax_weight = 1.0;
};

// Modality-specific classifiers over the shared embedding. Columns are
// classes: w_n and w_v are m x C, gamma is m x m.
struct CoupledHeads {
  Matrix w_n;
  Matrix w_v;
  Matrix gamma;
  HeadsParams params;

  int embedding_dim() const { return static_cast<int>(w_n.rows()); }
  int class_count() const { return static_cast<int>(w_n.cols()); }
  // [w_n w_v], m x 2C.
  Matrix stacked() const;
};

// Gaussian heads (std = init_std, or 1/sqrt(m) when init_std <= 0) and
// gamma = sqrt(mu) I, the value update_gamma gives for zero heads.
CoupledHeads init_heads(int embedding_dim, int class_count, const HeadsParams& params,
                        double init_std, std::uint64_t seed);

struct SoftmaxResult {
  double loss = 0.0;
  Matrix d_w_n;
  Matrix d_w_v;
  Matrix d_embeddings;
};

// Mean cross-entropy; sample i is scored by w_n if modalities[i] is nir and by
// w_v otherwise. Throws DataError on a label outside [0, C).
SoftmaxResult softmax_loss(const CoupledHeads& heads, const Matrix& embeddings,
                           std::span<const int> labels, std::span<const Modality> modalities);

// 1/2 lambda (tr(M^T Gamma^-1 M) + tr(Gamma)) with M = [w_n w_v].
double r1_value(const CoupledHeads& heads);

// psd_sqrt(w_n w_n^T + w_v w_v^T, mu). Does not modify heads.
Matrix update_gamma(const CoupledHeads& heads);

// Replaces heads.gamma with update_gamma(heads) and returns it.
const Matrix& refresh_gamma(CoupledHeads& heads);

struct HeadGrads {
  Matrix d_w_n;
  Matrix d_w_v;
};

// Derivative of r1_value with gamma held fixed:
// 1/2 lambda (Gamma^-1 + Gamma^-T) W for each head.
HeadGrads r1_grads(const CoupledHeads& heads);

struct R2Result {
  double value = 0.0;
  Matrix d_w_n;
  Matrix d_w_v;
};

// 1/2 (||w_n^T w_n - I||_F^2 + ||w_v^T w_v - I||_F^2) and its exact gradient
// 2 W (W^T W - I).
R2Result r2_value_and_grads(const CoupledHeads& heads);

struct RelevanceGrads {
  Matrix d_w_n;
  Matrix d_w_v;
  Matrix d_embeddings;  // from the softmax term only
  double loss_value = 0.0;
  double softmax = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
};

// softmax_weight * softmax + alpha1 * R1 + alpha2 * R2. Gradients are computed
// against the current heads.gamma. Terms with zero weight are skipped.
RelevanceGrads relevance_loss(const CoupledHeads& heads, const Matrix& embeddings,
                              std::span<const int> labels,
                              std::span<const Modality> modalities);

struct CorrelationResult {
  Matrix values;                 // 2C x 2C absolute cosines, unit diagonal
  std::vector<bool> undefined;   // columns of [w_n w_v] with zero norm
};

CorrelationResult correlation_matrix(const CoupledHeads& heads);

// Mean of |cos(w_n[:, i], w_v[:, i])| over classes: the (i, C+i) entries.
double cross_block_mean(const CorrelationResult& corr);

}  // namespace cdl
