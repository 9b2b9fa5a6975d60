#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace catn {

using Index = Eigen::Index;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Thin SVD A = U * diag(singular_values) * Vt with r = min(rows, cols).
///
/// Singular values are nonincreasing. Each column of U has its entry of
/// largest magnitude nonnegative (lowest index wins ties); the matching row
/// of Vt carries the sign.
template <class Scalar>
struct SvdResult {
  MatrixX<Scalar> U;
  VectorX<Scalar> singular_values;
  MatrixX<Scalar> Vt;
};

/// Throws std::domain_error naming the first non-finite entry.
template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a,
                    std::string_view what = "matrix") {
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (!std::isfinite(a(i, j))) {
        std::ostringstream msg;
        msg << what << ": non-finite entry " << a(i, j) << " at (" << i << ", "
            << j << ")";
        throw std::domain_error(msg.str());
      }
    }
  }
}

namespace detail {

// Hestenes one-sided Jacobi: rotates the columns of w until they are mutually
// orthogonal, accumulating the rotations in v (w_in * v = w_out). Rows of
// w that are exactly zero stay exactly zero.
template <class Scalar>
void orthogonalize_columns(MatrixX<Scalar>& w, MatrixX<Scalar>& v) {
  const Index n = w.cols();
  v.setIdentity(n, n);
  constexpr Scalar eps = std::numeric_limits<Scalar>::epsilon();
  constexpr int max_sweeps = 80;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar alpha = w.col(p).squaredNorm();
        const Scalar beta = w.col(q).squaredNorm();
        const Scalar gamma = w.col(p).dot(w.col(q));
        if (gamma == Scalar(0) ||
            std::abs(gamma) <= eps * std::sqrt(alpha) * std::sqrt(beta)) {
          continue;
        }
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Index i = 0; i < w.rows(); ++i) {
          const Scalar wp = w(i, p);
          const Scalar wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Index i = 0; i < n; ++i) {
          const Scalar vp = v(i, p);
          const Scalar vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

// Requires a.rows() >= a.cols(). Produces U (m x n), sigma (n), V (n x n),
// sorted, with null directions of U completed to an orthonormal set.
template <class Scalar>
void tall_svd(const MatrixX<Scalar>& a, MatrixX<Scalar>& u,
              VectorX<Scalar>& sigma, MatrixX<Scalar>& v) {
  const Index m = a.rows();
  const Index n = a.cols();
  MatrixX<Scalar> w = a;
  MatrixX<Scalar> rot;
  orthogonalize_columns(w, rot);

  VectorX<Scalar> norms(n);
  for (Index j = 0; j < n; ++j) norms(j) = w.col(j).norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return norms(x) > norms(y); });

  u.resize(m, n);
  sigma.resize(n);
  v.resize(n, n);
  std::vector<bool> filled(static_cast<std::size_t>(n), false);
  for (Index k = 0; k < n; ++k) {
    const Index j = order[static_cast<std::size_t>(k)];
    sigma(k) = norms(j);
    v.col(k) = rot.col(j);
    if (norms(j) > Scalar(0)) {
      u.col(k) = w.col(j) / norms(j);
      filled[static_cast<std::size_t>(k)] = true;
    }
  }
  // Complete U with unit vectors orthogonalized against the filled columns.
  Index candidate = 0;
  for (Index k = 0; k < n; ++k) {
    if (filled[static_cast<std::size_t>(k)]) continue;
    while (true) {
      VectorX<Scalar> e = VectorX<Scalar>::Unit(m, candidate++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index other = 0; other < n; ++other) {
          if (!filled[static_cast<std::size_t>(other)]) continue;
          e -= u.col(other).dot(e) * u.col(other);
        }
      }
      const Scalar len = e.norm();
      if (len > Scalar(0.5)) {
        u.col(k) = e / len;
        filled[static_cast<std::size_t>(k)] = true;
        break;
      }
    }
  }
}

}  // namespace detail

/// Thin SVD by one-sided Jacobi. Deterministic for identical input bits.
template <class Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() < 1 || a.cols() < 1) {
    throw std::invalid_argument("svd: matrix must have at least one row and column");
  }
  require_finite(a, "svd");

  SvdResult<Scalar> out;
  if (a.rows() >= a.cols()) {
    MatrixX<Scalar> v;
    detail::tall_svd(MatrixX<Scalar>(a), out.U, out.singular_values, v);
    out.Vt = v.transpose();
  } else {
    MatrixX<Scalar> u_t;
    MatrixX<Scalar> v_t;
    detail::tall_svd(MatrixX<Scalar>(a.transpose()), u_t, out.singular_values, v_t);
    out.U = std::move(v_t);
    out.Vt = u_t.transpose();
  }

  for (Index k = 0; k < out.U.cols(); ++k) {
    Index arg = 0;
    Scalar best = Scalar(-1);
    for (Index i = 0; i < out.U.rows(); ++i) {
      const Scalar mag = std::abs(out.U(i, k));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (out.U(arg, k) < Scalar(0)) {
      out.U.col(k) = -out.U.col(k);
      out.Vt.row(k) = -out.Vt.row(k);
    }
  }
  return out;
}

/// Singular value soft-thresholding: U * diag((sigma - threshold)_+) * Vt.
/// This is the proximal operator of threshold * ||.||_*.
template <class Derived>
MatrixX<typename Derived::Scalar> svt(const Eigen::MatrixBase<Derived>& a,
                                      typename Derived::Scalar threshold) {
  using Scalar = typename Derived::Scalar;
  if (!(threshold >= Scalar(0))) {
    throw std::invalid_argument("svt: threshold must be nonnegative");
  }
  const auto dec = svd(a);
  Index kept = 0;
  while (kept < dec.singular_values.size() &&
         dec.singular_values(kept) > threshold) {
    ++kept;
  }
  if (kept == 0) return MatrixX<Scalar>::Zero(a.rows(), a.cols());
  const VectorX<Scalar> shrunk =
      dec.singular_values.head(kept).array() - threshold;
  return dec.U.leftCols(kept) * shrunk.asDiagonal() * dec.Vt.topRows(kept);
}

template <class Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived>& a) {
  return svd(a).singular_values.sum();
}

template <class Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& a) {
  return a.norm();
}

/// Number of values strictly above rel_tol times the largest one.
template <class Derived>
Index effective_rank_of_values(const Eigen::MatrixBase<Derived>& sigma,
                               typename Derived::Scalar rel_tol) {
  if (sigma.size() == 0) return 0;
  const auto cutoff = rel_tol * sigma.maxCoeff();
  Index count = 0;
  for (Index j = 0; j < sigma.size(); ++j) {
    if (sigma(j) > cutoff) ++count;
  }
  return count;
}

template <class Derived>
Index effective_rank(const Eigen::MatrixBase<Derived>& a,
                     typename Derived::Scalar rel_tol) {
  using Scalar = typename Derived::Scalar;
  if (!(rel_tol > Scalar(0) && rel_tol < Scalar(1))) {
    throw std::invalid_argument("effective_rank: rel_tol must lie in (0, 1)");
  }
  return effective_rank_of_values(svd(a).singular_values, rel_tol);
}

}  // namespace catn
