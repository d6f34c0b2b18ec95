#include "cdl/coupling.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "cdl/error.hpp"
#include "cdl/rng.hpp"

namespace cdl {

Matrix CoupledHeads::stacked() const {
  Matrix m(w_n.rows(), w_n.cols() + w_v.cols());
  m << w_n, w_v;
  return m;
}

CoupledHeads init_heads(int embedding_dim, int class_count, const HeadsParams& params,
                        double init_std, std::uint64_t seed) {
  if (embedding_dim <= 0 || class_count <= 0) {
    throw std::invalid_argument("init_heads: embedding dim and class count must be positive");
  }
  const double std_dev = init_std > 0.0 ? init_std : 1.0 / std::sqrt(double(embedding_dim));
  Rng rng = make_rng(seed, "heads.init");
  std::normal_distribution<double> dist(0.0, std_dev);
  CoupledHeads h;
  h.params = params;
  h.w_n.resize(embedding_dim, class_count);
  h.w_v.resize(embedding_dim, class_count);
  for (Matrix* w : {&h.w_n, &h.w_v}) {
    for (Eigen::Index c = 0; c < w->cols(); ++c) {
      for (Eigen::Index r = 0; r < w->rows(); ++r) (*w)(r, c) = dist(rng);
    }
  }
  h.gamma = std::sqrt(params.mu) * Matrix::Identity(embedding_dim, embedding_dim);
  return h;
}

namespace {

void check_heads(const CoupledHeads& heads) {
  if (heads.w_n.rows() != heads.w_v.rows() || heads.w_n.cols() != heads.w_v.cols()) {
    throw std::invalid_argument("heads: w_n and w_v must share a shape");
  }
}

// Cross-entropy over one modality's rows. Accumulates into d_w and d_x and
// returns the summed (not averaged) loss.
double softmax_group(const Matrix& w, const Matrix& x, std::span<const int> labels,
                     double scale, Matrix& d_w, Matrix& d_x) {
  Matrix logits = x * w;  // n x C
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    logits.row(i).array() -= top;
    logits.row(i) = logits.row(i).array().exp().matrix();
    const double z = logits.row(i).sum();
    const int y = labels[static_cast<std::size_t>(i)];
    // log p(y) = (l_y - top) - log z; the row now holds exp(l - top).
    loss -= std::log(logits(i, y)) - std::log(z);
    logits.row(i) /= z;
    logits(i, y) -= 1.0;
  }
  logits *= scale;
  d_w = x.transpose() * logits;
  d_x = logits * w.transpose();
  return loss;
}

}  // namespace

SoftmaxResult softmax_loss(const CoupledHeads& heads, const Matrix& embeddings,
                           std::span<const int> labels, std::span<const Modality> modalities) {
  check_heads(heads);
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n || modalities.size() != n) {
    throw DataError("softmax_loss: batch of " + std::to_string(n) + " rows has " +
                    std::to_string(labels.size()) + " labels and " +
                    std::to_string(modalities.size()) + " modality tags");
  }
  if (embeddings.cols() != heads.embedding_dim()) {
    throw DataError("softmax_loss: embedding width " + std::to_string(embeddings.cols()) +
                    " does not match heads (" + std::to_string(heads.embedding_dim()) + ")");
  }
  const int classes = heads.class_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("softmax_loss: label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }

  SoftmaxResult out;
  out.d_w_n = Matrix::Zero(heads.w_n.rows(), heads.w_n.cols());
  out.d_w_v = Matrix::Zero(heads.w_v.rows(), heads.w_v.cols());
  out.d_embeddings = Matrix::Zero(embeddings.rows(), embeddings.cols());
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);

  for (Modality mod : {Modality::nir, Modality::vis}) {
    std::vector<Eigen::Index> rows;
    std::vector<int> group_labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (modalities[i] == mod) {
        rows.push_back(static_cast<Eigen::Index>(i));
        group_labels.push_back(labels[i]);
      }
    }
    if (rows.empty()) continue;
    const Matrix x = embeddings(rows, Eigen::all);
    const Matrix& w = mod == Modality::nir ? heads.w_n : heads.w_v;
    Matrix& d_w = mod == Modality::nir ? out.d_w_n : out.d_w_v;
    Matrix d_x;
    out.loss += softmax_group(w, x, group_labels, scale, d_w, d_x);
    out.d_embeddings(rows, Eigen::all) = d_x;
  }
  out.loss *= scale;
  return out;
}

double r1_value(const CoupledHeads& heads) {
  check_heads(heads);
  const double lambda = heads.params.lambda;
  if (lambda == 0.0) return 0.0;
  const Matrix gamma_inv = spd_inverse(heads.gamma);
  const Matrix m = heads.stacked();
  const double quad = (m.transpose() * gamma_inv * m).trace();
  return 0.5 * lambda * (quad + heads.gamma.trace());
}

Matrix update_gamma(const CoupledHeads& heads) {
  check_heads(heads);
  const Matrix outer = heads.w_n * heads.w_n.transpose() + heads.w_v * heads.w_v.transpose();
  return psd_sqrt(symmetrize(outer), heads.params.mu);
}

const Matrix& refresh_gamma(CoupledHeads& heads) {
  heads.gamma = update_gamma(heads);
  return heads.gamma;
}

HeadGrads r1_grads(const CoupledHeads& heads) {
  check_heads(heads);
  const double lambda = heads.params.lambda;
  if (lambda == 0.0) {
    return {Matrix::Zero(heads.w_n.rows(), heads.w_n.cols()),
            Matrix::Zero(heads.w_v.rows(), heads.w_v.cols())};
  }
  const Matrix gamma_inv = spd_inverse(heads.gamma);
  const Matrix left = 0.5 * lambda * (gamma_inv + gamma_inv.transpose());
  return {left * heads.w_n, left * heads.w_v};
}

R2Result r2_value_and_grads(const CoupledHeads& heads) {
  check_heads(heads);
  R2Result out;
  const Eigen::Index c = heads.w_n.cols();
  const Matrix eye = Matrix::Identity(c, c);
  const Matrix e_n = heads.w_n.transpose() * heads.w_n - eye;
  const Matrix e_v = heads.w_v.transpose() * heads.w_v - eye;
  out.value = 0.5 * (e_n.squaredNorm() + e_v.squaredNorm());
  out.d_w_n = 2.0 * heads.w_n * e_n;
  out.d_w_v = 2.0 * heads.w_v * e_v;
  return out;
}

RelevanceGrads relevance_loss(const CoupledHeads& heads, const Matrix& embeddings,
                              std::span<const int> labels,
                              std::span<const Modality> modalities) {
  const HeadsParams& p = heads.params;
  RelevanceGrads out;
  out.d_w_n = Matrix::Zero(heads.w_n.rows(), heads.w_n.cols());
  out.d_w_v = Matrix::Zero(heads.w_v.rows(), heads.w_v.cols());
  out.d_embeddings = Matrix::Zero(embeddings.rows(), embeddings.cols());

  SoftmaxResult sm = softmax_loss(heads, embeddings, labels, modalities);
  out.softmax = sm.loss;
  if (p.softmax_weight != 0.0) {
    out.d_w_n += p.softmax_weight * sm.d_w_n;
    out.d_w_v += p.softmax_weight * sm.d_w_v;
    out.d_embeddings = p.softmax_weight * sm.d_embeddings;
  }
  if (p.alpha1 != 0.0 && p.lambda != 0.0) {
    out.r1 = r1_value(heads);
    HeadGrads g = r1_grads(heads);
    out.d_w_n += p.alpha1 * g.d_w_n;
    out.d_w_v += p.alpha1 * g.d_w_v;
  }
  if (p.alpha2 != 0.0) {
    R2Result r2 = r2_value_and_grads(heads);
    out.r2 = r2.value;
    out.d_w_n += p.alpha2 * r2.d_w_n;
    out.d_w_v += p.alpha2 * r2.d_w_v;
  }
  out.loss_value = p.softmax_weight * out.softmax + p.alpha1 * out.r1 + p.alpha2 * out.r2;
  return out;
}

CorrelationResult correlation_matrix(const CoupledHeads& heads) {
  check_heads(heads);
  const Matrix m = heads.stacked();
  const Eigen::Index k = m.cols();
  Vector norms = m.colwise().norm().transpose();
  CorrelationResult out;
  out.values = Matrix::Identity(k, k);
  out.undefined.assign(static_cast<std::size_t>(k), false);
  for (Eigen::Index i = 0; i < k; ++i) out.undefined[std::size_t(i)] = !(norms(i) > 0.0);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      double v = 0.0;
      if (!out.undefined[std::size_t(i)] && !out.undefined[std::size_t(j)]) {
        v = std::min(1.0, std::abs(m.col(i).dot(m.col(j))) / (norms(i) * norms(j)));
      }
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

double cross_block_mean(const CorrelationResult& corr) {
  const Eigen::Index c = corr.values.rows() / 2;
  if (c == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < c; ++i) sum += corr.values(i, c + i);
  return sum / static_cast<double>(c);
}

}  // namespace cdl
