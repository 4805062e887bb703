#pragma once

// Dense symmetric / symmetric positive-definite linear algebra.
//
// Matrix functions (Log, Exp, powers) go through a full symmetric
// eigendecomposition. Inputs in this library are small (d of order 10), so
// exactness on the spectrum matters more than asymptotic cost.

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mfcov {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Symmetric d x d matrix. Construction symmetrizes (M + M^T) / 2, so
/// entries(i, j) == entries(j, i) holds exactly.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(const Matrix& m);

  static SymmetricMatrix identity(Index dim);
  static SymmetricMatrix zero(Index dim);
  static SymmetricMatrix diagonal(const Vector& diag);

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  SymmetricMatrix operator+(const SymmetricMatrix& other) const;
  SymmetricMatrix operator-(const SymmetricMatrix& other) const;
  SymmetricMatrix operator*(double s) const;
  SymmetricMatrix& operator+=(const SymmetricMatrix& other);

 private:
  struct Trusted {};
  SymmetricMatrix(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;
};

inline SymmetricMatrix operator*(double s, const SymmetricMatrix& a) { return a * s; }

/// Eigenvalues sorted descending, eigenvectors as the matching columns.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  /// Q diag(f(lambda)) Q^T for an arbitrary diagonal.
  Matrix reconstruct(const Vector& diag) const;
  Matrix reconstruct() const { return reconstruct(eigenvalues); }
};

/// Symmetric positive-definite matrix.
///
/// Accepted when, after symmetrization, the smallest eigenvalue satisfies
/// lambda_min > -1e-12 * max(1, lambda_max). Values in that noise band are kept
/// as computed; spd_log rejects any that remain nonpositive.
///
/// An SpdMatrix may carry the eigendecomposition it was built from (validation,
/// sym_exp, truncation). Matrix functions reuse it, so a spectrum such as
/// max(lambda, 1e-16) is not lost to rounding in the reconstructed entries.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Matrix& m);
  explicit SpdMatrix(const SymmetricMatrix& s);

  static SpdMatrix identity(Index dim);
  static SpdMatrix diagonal(const Vector& diag);

  /// Wraps a matrix already known to be SPD (e.g. Q exp(L) Q^T) without
  /// re-validating. The caller owns the invariant.
  static SpdMatrix unchecked(SymmetricMatrix s) { return SpdMatrix(std::move(s), nullptr); }

  /// Builds Q diag(lambda) Q^T and keeps the factorization. All eigenvalues
  /// must be positive.
  static SpdMatrix from_spectrum(EigenDecomposition eig);

  Index dim() const noexcept { return s_.dim(); }
  const Matrix& matrix() const noexcept { return s_.matrix(); }
  const SymmetricMatrix& symmetric() const noexcept { return s_; }
  operator const SymmetricMatrix&() const noexcept { return s_; }
  double operator()(Index i, Index j) const { return s_(i, j); }

  /// Eigendecomposition, from the cache when one is attached.
  EigenDecomposition eig() const;
  double min_eigenvalue() const;

 private:
  SpdMatrix(SymmetricMatrix s, std::shared_ptr<const EigenDecomposition> spectrum)
      : s_(std::move(s)), spectrum_(std::move(spectrum)) {}
  SymmetricMatrix s_;
  std::shared_ptr<const EigenDecomposition> spectrum_;
};

/// Relative tolerance used by the SPD acceptance test.
inline constexpr double kSpdTolerance = 1e-12;

/// Default eigenvalue floor for the truncation operator.
inline constexpr double kDefaultTruncationDelta = 1e-16;

EigenDecomposition sym_eig(const SymmetricMatrix& a);

/// True when `a` passes the SpdMatrix acceptance test.
bool is_spd(const SymmetricMatrix& a);

SymmetricMatrix spd_log(const SpdMatrix& a);
SpdMatrix sym_exp(const SymmetricMatrix& s);
SpdMatrix spd_pow(const SpdMatrix& a, double t);
SpdMatrix spd_inverse(const SpdMatrix& a);

// Log-Euclidean vector-space structure.
SpdMatrix log_add(const SpdMatrix& a, const SpdMatrix& b);
SpdMatrix log_sub(const SpdMatrix& a, const SpdMatrix& b);

double dist_frobenius(const SymmetricMatrix& a, const SymmetricMatrix& b);
double dist_log_euclidean(const SpdMatrix& a, const SpdMatrix& b);

/// ||Log(A^{-1/2} B A^{-1/2})||_F, i.e. the root sum of squared logs of the
/// generalized eigenvalues of (B, A).
double dist_affine_invariant(const SpdMatrix& a, const SpdMatrix& b);

/// Q max(Lambda, delta) Q^T.
SpdMatrix truncate_eigenvalues(const SymmetricMatrix& a, double delta = kDefaultTruncationDelta);

/// exp( sum_i w_i Log A_i / sum_i w_i ), the minimizer of sum_i w_i d_LE(X, A_i)^2.
SpdMatrix frechet_mean_log_euclidean(std::span<const SpdMatrix> matrices,
                                     std::span<const double> weights);

double smallest_eigenvalue(const SymmetricMatrix& a);

}  // namespace mfcov
