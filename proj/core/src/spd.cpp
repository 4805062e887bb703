#include "mfcov/spd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "mfcov/errors.hpp"

namespace mfcov {
namespace {

// exp() of anything above this overflows a double; below the lower bound the
// result underflows to zero and the matrix would lose definiteness.
constexpr double kExpUpper = 709.0;
constexpr double kExpLower = -708.0;

void require_same_dim(Index a, Index b, const char* op) {
  if (a != b) {
    std::ostringstream os;
    os << op << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(os.str());
  }
}

Matrix symmetrize(const Matrix& m) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "symmetric matrix must be square, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
  if (m.rows() < 1) throw DimensionError("symmetric matrix must have dimension >= 1");
  if (!m.allFinite()) throw Error("symmetric matrix has non-finite entries");
  return 0.5 * (m + m.transpose());
}

bool passes_spd_test(const Vector& descending) {
  const double hi = descending(0);
  const double lo = descending(descending.size() - 1);
  return lo > -kSpdTolerance * std::max(1.0, hi);
}

std::string describe_eigenvalue(const char* what, double lambda) {
  std::ostringstream os;
  os.precision(17);
  os << what << " (eigenvalue " << lambda << ")";
  return os.str();
}

}  // namespace

// --- SymmetricMatrix -------------------------------------------------------

SymmetricMatrix::SymmetricMatrix(const Matrix& m) : m_(symmetrize(m)) {}

SymmetricMatrix SymmetricMatrix::identity(Index dim) {
  return SymmetricMatrix(Matrix::Identity(dim, dim));
}

SymmetricMatrix SymmetricMatrix::zero(Index dim) {
  return SymmetricMatrix(Matrix::Zero(dim, dim));
}

SymmetricMatrix SymmetricMatrix::diagonal(const Vector& diag) {
  return SymmetricMatrix(Matrix(diag.asDiagonal()));
}

SymmetricMatrix SymmetricMatrix::operator+(const SymmetricMatrix& other) const {
  require_same_dim(dim(), other.dim(), "operator+");
  return SymmetricMatrix(m_ + other.m_, Trusted{});
}

SymmetricMatrix SymmetricMatrix::operator-(const SymmetricMatrix& other) const {
  require_same_dim(dim(), other.dim(), "operator-");
  return SymmetricMatrix(m_ - other.m_, Trusted{});
}

SymmetricMatrix SymmetricMatrix::operator*(double s) const {
  return SymmetricMatrix(m_ * s, Trusted{});
}

SymmetricMatrix& SymmetricMatrix::operator+=(const SymmetricMatrix& other) {
  require_same_dim(dim(), other.dim(), "operator+=");
  m_ += other.m_;
  return *this;
}

// --- EigenDecomposition ----------------------------------------------------

Matrix EigenDecomposition::reconstruct(const Vector& diag) const {
  Matrix out = eigenvectors * diag.asDiagonal() * eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

EigenDecomposition sym_eig(const SymmetricMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
  if (solver.info() != Eigen::Success) {
    // Eigen caps the tridiagonal QR at 30 sweeps per row.
    const int iterations = static_cast<int>(30 * a.dim());
    std::ostringstream os;
    os << "symmetric eigensolver failed to converge within " << iterations << " iterations";
    throw ConvergenceError(os.str(), iterations);
  }
  // Eigen returns ascending order.
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

// --- SpdMatrix -------------------------------------------------------------

SpdMatrix::SpdMatrix(const Matrix& m) : SpdMatrix(SymmetricMatrix(m)) {}

SpdMatrix::SpdMatrix(const SymmetricMatrix& s) : s_(s) {
  auto eig = std::make_shared<EigenDecomposition>(sym_eig(s_));
  if (!passes_spd_test(eig->eigenvalues)) {
    const double lo = eig->eigenvalues(eig->eigenvalues.size() - 1);
    throw DefinitenessError(describe_eigenvalue("matrix is not positive definite", lo), lo);
  }
  spectrum_ = std::move(eig);
}

SpdMatrix SpdMatrix::identity(Index dim) {
  return from_spectrum({Vector::Ones(dim), Matrix::Identity(dim, dim)});
}

SpdMatrix SpdMatrix::diagonal(const Vector& diag) { return SpdMatrix(Matrix(diag.asDiagonal())); }

SpdMatrix SpdMatrix::from_spectrum(EigenDecomposition eig) {
  const double lo = eig.eigenvalues.minCoeff();
  if (!(lo > 0.0)) {
    throw DefinitenessError(describe_eigenvalue("spectrum is not positive", lo), lo);
  }
  SymmetricMatrix s(eig.reconstruct());
  return SpdMatrix(std::move(s), std::make_shared<const EigenDecomposition>(std::move(eig)));
}

EigenDecomposition SpdMatrix::eig() const {
  if (spectrum_) return *spectrum_;
  return sym_eig(s_);
}

double SpdMatrix::min_eigenvalue() const {
  if (spectrum_) return spectrum_->eigenvalues(spectrum_->eigenvalues.size() - 1);
  return smallest_eigenvalue(s_);
}

bool is_spd(const SymmetricMatrix& a) { return passes_spd_test(sym_eig(a).eigenvalues); }

// --- Matrix functions ------------------------------------------------------

SymmetricMatrix spd_log(const SpdMatrix& a) {
  const EigenDecomposition eig = a.eig();
  const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (!(lo > 0.0)) {
    throw DefinitenessError(describe_eigenvalue("matrix logarithm of a non-positive-definite matrix", lo),
                            lo);
  }
  return SymmetricMatrix(eig.reconstruct(eig.eigenvalues.array().log().matrix()));
}

SpdMatrix sym_exp(const SymmetricMatrix& s) {
  EigenDecomposition eig = sym_eig(s);
  const double hi = eig.eigenvalues(0);
  const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (hi > kExpUpper) throw RangeError(describe_eigenvalue("matrix exponential overflows", hi), hi);
  if (lo < kExpLower) throw RangeError(describe_eigenvalue("matrix exponential underflows", lo), lo);
  eig.eigenvalues = eig.eigenvalues.array().exp().matrix();
  return SpdMatrix::from_spectrum(std::move(eig));
}

SpdMatrix spd_pow(const SpdMatrix& a, double t) {
  if (t == 1.0) return a;
  if (t == 0.0) return SpdMatrix::identity(a.dim());
  return sym_exp(spd_log(a) * t);
}

SpdMatrix spd_inverse(const SpdMatrix& a) {
  EigenDecomposition eig = a.eig();
  const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
  if (!(lo > 0.0)) throw DefinitenessError(describe_eigenvalue("inverse of a singular matrix", lo), lo);
  eig.eigenvalues = eig.eigenvalues.cwiseInverse().reverse().eval();
  eig.eigenvectors = eig.eigenvectors.rowwise().reverse().eval();
  return SpdMatrix::from_spectrum(std::move(eig));
}

SpdMatrix log_add(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "log_add");
  return sym_exp(spd_log(a) + spd_log(b));
}

SpdMatrix log_sub(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "log_sub");
  return sym_exp(spd_log(a) - spd_log(b));
}

// --- Distances -------------------------------------------------------------

double dist_frobenius(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "dist_frobenius");
  return (a.matrix() - b.matrix()).norm();
}

double dist_log_euclidean(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "dist_log_euclidean");
  return (spd_log(a).matrix() - spd_log(b).matrix()).norm();
}

double dist_affine_invariant(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "dist_affine_invariant");
  const EigenDecomposition ea = a.eig();
  const EigenDecomposition eb = b.eig();
  const Index last = a.dim() - 1;
  if (!(ea.eigenvalues(last) > 0.0)) {
    throw DefinitenessError(describe_eigenvalue("first argument is not positive definite", ea.eigenvalues(last)),
                            ea.eigenvalues(last));
  }
  if (!(eb.eigenvalues(last) > 0.0)) {
    throw DefinitenessError(describe_eigenvalue("second argument is not positive definite", eb.eigenvalues(last)),
                            eb.eigenvalues(last));
  }
  // The distance is symmetric, so let x be the worse-conditioned argument.
  // With x = Q diag(lambda) Q^T and Q^T y Q = R R^T, the generalized eigenvalues
  // of (y, x) are the squared singular values of diag(lambda^-1/2) R. Jacobi SVD
  // resolves these to high relative accuracy even when x has eigenvalues near
  // the truncation floor, where whitening by x^-1/2 would lose them to roundoff.
  const bool a_worse = ea.eigenvalues(last) * eb.eigenvalues(0) <= eb.eigenvalues(last) * ea.eigenvalues(0);
  const EigenDecomposition& ex = a_worse ? ea : eb;
  const Matrix& y = a_worse ? b.matrix() : a.matrix();
  const Matrix rotated = ex.eigenvectors.transpose() * y * ex.eigenvectors;
  const Eigen::LLT<Matrix> llt(0.5 * (rotated + rotated.transpose()));
  Vector log_mu(a.dim());
  if (llt.info() == Eigen::Success) {
    const Matrix g = ex.eigenvalues.array().rsqrt().matrix().asDiagonal() * Matrix(llt.matrixL());
    const Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(g);
    log_mu = 2.0 * svd.singularValues().array().log();
  } else {
    // Roundoff in y's near-null directions; fall back to whitening.
    const Matrix inv_sqrt = ex.reconstruct(ex.eigenvalues.array().rsqrt().matrix());
    const Vector mu = sym_eig(SymmetricMatrix(inv_sqrt * y * inv_sqrt)).eigenvalues;
    if (!(mu(last) > 0.0)) {
      throw DefinitenessError(describe_eigenvalue("generalized eigenvalue is not positive", mu(last)), mu(last));
    }
    log_mu = mu.array().log();
  }
  return std::sqrt(log_mu.squaredNorm());
}

// --- Truncation, means, diagnostics ---------------------------------------

SpdMatrix truncate_eigenvalues(const SymmetricMatrix& a, double delta) {
  if (!(delta > 0.0)) throw Error("truncation threshold must be positive");
  EigenDecomposition eig = sym_eig(a);
  if (eig.eigenvalues(eig.eigenvalues.size() - 1) >= delta) {
    // Already above the floor: T_delta is the identity map.
    SymmetricMatrix copy = a;
    return SpdMatrix::unchecked(std::move(copy));
  }
  eig.eigenvalues = eig.eigenvalues.cwiseMax(delta);
  return SpdMatrix::from_spectrum(std::move(eig));
}

SpdMatrix frechet_mean_log_euclidean(std::span<const SpdMatrix> matrices,
                                     std::span<const double> weights) {
  if (matrices.empty()) throw Error("frechet_mean_log_euclidean: empty input");
  if (matrices.size() != weights.size()) {
    throw DimensionError("frechet_mean_log_euclidean: matrices and weights differ in length");
  }
  const Index d = matrices.front().dim();
  Matrix acc = Matrix::Zero(d, d);
  double total = 0.0;
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    require_same_dim(d, matrices[i].dim(), "frechet_mean_log_euclidean");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw Error("frechet_mean_log_euclidean: weights must be positive and finite");
    }
    acc += weights[i] * spd_log(matrices[i]).matrix();
    total += weights[i];
  }
  return sym_exp(SymmetricMatrix(acc / total));
}

double smallest_eigenvalue(const SymmetricMatrix& a) {
  const Vector ev = sym_eig(a).eigenvalues;
  return ev(ev.size() - 1);
}

}  // namespace mfcov
