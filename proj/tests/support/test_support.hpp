#pragma once

// Seeded generators and independent reference computations for the tests.
// Nothing here calls into the library's spectral routines.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace mfcov::testing {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  Mat gaussian(Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  Mat symmetric(Eigen::Index d, double scale = 1.0) {
    const Mat g = gaussian(d, d) * scale;
    return 0.5 * (g + g.transpose());
  }

  Mat orthogonal(Eigen::Index d) {
    Eigen::HouseholderQR<Mat> qr(gaussian(d, d));
    return qr.householderQ() * Mat::Identity(d, d);
  }

  /// Q diag(lambda) Q^T with log-uniform eigenvalues spanning `condition`.
  Mat spd(Eigen::Index d, double condition = 100.0) {
    const Mat q = orthogonal(d);
    Vec lambda(d);
    for (Eigen::Index i = 0; i < d; ++i) lambda(i) = std::pow(condition, uniform()) ;
    if (d > 1) {
      lambda(0) = 1.0;
      lambda(d - 1) = condition;
    }
    const double scale = std::exp(uniform(-1.0, 1.0));
    Mat a = q * (scale * lambda).asDiagonal() * q.transpose();
    return 0.5 * (a + a.transpose());
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Mat expm_taylor(const Mat& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
  const Mat scaled = a / std::ldexp(1.0, squarings);
  Mat term = Mat::Identity(a.rows(), a.cols());
  Mat sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / k;
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

/// Eigen-free symmetric 2x2 spectral map f applied through closed-form
/// eigenpairs.
template <class F>
Mat spectral_2x2(const Mat& a, F f) {
  const double p = a(0, 0), q = a(0, 1), r = a(1, 1);
  const double mean = 0.5 * (p + r);
  const double rad = std::hypot(0.5 * (p - r), q);
  const double l1 = mean + rad, l2 = mean - rad;
  if (rad == 0.0) return f(l1) * Mat::Identity(2, 2);
  // (A - l2 I)/(l1 - l2) and (l1 I - A)/(l1 - l2) are the spectral projectors.
  const Mat i2 = Mat::Identity(2, 2);
  const Mat p1 = (a - l2 * i2) / (l1 - l2);
  const Mat p2 = (l1 * i2 - a) / (l1 - l2);
  return f(l1) * p1 + f(l2) * p2;
}

inline Mat logm_2x2(const Mat& a) {
  return spectral_2x2(a, [](double x) { return std::log(x); });
}
inline Mat expm_2x2(const Mat& a) {
  return spectral_2x2(a, [](double x) { return std::exp(x); });
}

/// Entrywise sum of squares.
inline double frobenius_loop(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s);
}

/// Generalized variances and correlations of the outer products of a
/// zero-mean Gaussian pair (y0, yl) with joint covariance [[S, S], [S, S+G]],
/// by explicit four-index Isserlis enumeration:
///   Cov(a_i a_j, b_i b_j) = C(a_i, b_i) C(a_j, b_j) + C(a_i, b_j) C(a_j, b_i).
struct IsserlisMoments {
  double var0;
  double var_l;
  double cross;
};

inline IsserlisMoments isserlis_moments(const Mat& sigma, const Mat& gamma) {
  const Eigen::Index d = sigma.rows();
  const Mat sl = sigma + gamma;
  IsserlisMoments out{0.0, 0.0, 0.0};
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out.var0 += sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(j, i);
      out.var_l += sl(i, i) * sl(j, j) + sl(i, j) * sl(j, i);
      // Cross-covariance of y0 and yl is Sigma (noise independent).
      out.cross += sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(j, i);
    }
  }
  return out;
}

}  // namespace mfcov::testing
