#include "cdl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdl/error.hpp"

namespace cdl {

namespace {

constexpr int kMaxSweeps = 80;
constexpr double kRotationTol = 1e-15;
constexpr double kSymmetryTol = 1e-10;
constexpr double kNegativeEigenTol = 1e-8;

// Hestenes one-sided Jacobi on a tall (rows >= cols) matrix.
SvdResult svd_tall(const Matrix& m) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  Matrix a = m;
  Matrix v = Matrix::Identity(cols, cols);

  int sweep = 0;
  for (;; ++sweep) {
    if (sweep == kMaxSweeps) {
      throw NumericError("svd: Jacobi sweeps did not converge after " +
                         std::to_string(kMaxSweeps) + " iterations");
    }
    bool rotated = false;
    for (Eigen::Index i = 0; i + 1 < cols; ++i) {
      for (Eigen::Index j = i + 1; j < cols; ++j) {
        const double alpha = a.col(i).squaredNorm();
        const double beta = a.col(j).squaredNorm();
        const double gamma = a.col(i).dot(a.col(j));
        if (gamma == 0.0 || std::abs(gamma) <= kRotationTol * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < rows; ++r) {
          const double ai = a(r, i);
          const double aj = a(r, j);
          a(r, i) = c * ai - s * aj;
          a(r, j) = s * ai + c * aj;
        }
        for (Eigen::Index r = 0; r < cols; ++r) {
          const double vi = v(r, i);
          const double vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(cols);
  for (Eigen::Index j = 0; j < cols; ++j) norms(j) = a.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SvdResult out;
  out.u = Matrix::Zero(rows, cols);
  out.s = Vector::Zero(cols);
  out.vt = Matrix::Zero(cols, cols);
  const double smax = cols > 0 ? norms(order.front()) : 0.0;
  const double zero_tol = smax * static_cast<double>(std::max(rows, cols)) * 1e-15;
  std::vector<Eigen::Index> null_cols;
  for (Eigen::Index k = 0; k < cols; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.s(k) = norms(src);
    out.vt.row(k) = v.col(src).transpose();
    if (norms(src) > zero_tol && norms(src) > 0.0) {
      out.u.col(k) = a.col(src) / norms(src);
    } else {
      null_cols.push_back(k);
    }
  }
  // Complete u to an orthonormal set for numerically zero singular values.
  Eigen::Index basis = 0;
  for (Eigen::Index k : null_cols) {
    for (; basis < rows; ++basis) {
      Vector e = Vector::Unit(rows, basis);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index q = 0; q < cols; ++q) {
          if (q == k) continue;
          e -= out.u.col(q).dot(e) * out.u.col(q);
        }
      }
      const double n = e.norm();
      if (n > 1e-6) {
        out.u.col(k) = e / n;
        ++basis;
        break;
      }
    }
  }
  return out;
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

SvdResult svd(const Matrix& m) {
  if (!m.allFinite()) throw NumericError("svd: input has non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);
  SvdResult t = svd_tall(m.transpose());
  return SvdResult{t.vt.transpose(), t.s, t.u.transpose()};
}

double trace_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return svd(m).s.sum();
}

Matrix symmetrize(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw NumericError("symmetrize: matrix is " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + ", expected square");
  }
  return 0.5 * (a + a.transpose());
}

SymmetricEigen symmetric_eigen(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw NumericError("symmetric_eigen: matrix is " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + ", expected square");
  }
  if (!a.allFinite()) throw NumericError("symmetric_eigen: input has non-finite entries");
  const double asym = (a - a.transpose()).norm();
  if (asym > kSymmetryTol * std::max(1.0, a.norm())) {
    throw NumericError("symmetric_eigen: input is not symmetric (||A - A^T||_F = " +
                       std::to_string(asym) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
  if (solver.info() != Eigen::Success) {
    throw NumericError("symmetric_eigen: eigensolver did not converge");
  }
  return SymmetricEigen{solver.eigenvalues(), solver.eigenvectors()};
}

namespace {

// Eigenvalues of a symmetric PSD input, clamped at zero, shifted by mu.
SymmetricEigen shifted_psd_spectrum(const Matrix& a, double mu) {
  SymmetricEigen eig = symmetric_eigen(a);
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    const double lambda = eig.values(k);
    if (lambda < -kNegativeEigenTol) {
      throw NumericError("psd_sqrt: input is not positive semi-definite (eigenvalue " +
                         std::to_string(lambda) + ")");
    }
    eig.values(k) = std::max(lambda, 0.0) + mu;
  }
  return eig;
}

Matrix from_spectrum(const SymmetricEigen& eig, const Vector& values) {
  return symmetrize(eig.vectors * values.asDiagonal() * eig.vectors.transpose());
}

}  // namespace

PsdRoots psd_roots(const Matrix& a, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("psd_roots: mu must be strictly positive");
  const SymmetricEigen eig = shifted_psd_spectrum(a, mu);
  const Vector root = eig.values.cwiseSqrt();
  return PsdRoots{from_spectrum(eig, root), from_spectrum(eig, root.cwiseInverse())};
}

Matrix psd_sqrt(const Matrix& a, double mu) {
  if (!(mu >= 0.0)) throw std::invalid_argument("psd_sqrt: mu must be non-negative");
  const SymmetricEigen eig = shifted_psd_spectrum(a, mu);
  return from_spectrum(eig, eig.values.cwiseSqrt());
}

Matrix psd_inv_sqrt(const Matrix& a, double mu) {
  if (!(mu > 0.0)) {
    throw std::invalid_argument("psd_inv_sqrt: mu must be strictly positive");
  }
  const SymmetricEigen eig = shifted_psd_spectrum(a, mu);
  return from_spectrum(eig, eig.values.cwiseSqrt().cwiseInverse());
}

Matrix spd_inverse(const Matrix& a) {
  const SymmetricEigen eig = symmetric_eigen(a);
  if (eig.values.size() > 0 && !(eig.values(0) > 0.0)) {
    throw NumericError("spd_inverse: matrix is not positive definite (smallest eigenvalue " +
                       std::to_string(eig.values(0)) + ")");
  }
  return from_spectrum(eig, eig.values.cwiseInverse());
}

}  // namespace cdl
