#include "mslab/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mslab {

Ball::Ball(const Vec3& c, double r) : center(c), radius(r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("Ball radius must be positive");
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return orth <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 rotation_from_quaternion(const std::array<double, 4>& wxyz) {
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  const double n = q.norm();
  if (!(n > 0.0)) throw std::invalid_argument("zero quaternion");
  q.coeffs() /= n;
  return q.toRotationMatrix();
}

std::array<double, 4> quaternion_from_rotation(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  // Canonical sign: w >= 0, then first nonzero of (x, y, z) positive.
  double sign = 1.0;
  if (q.w() < 0.0) {
    sign = -1.0;
  } else if (q.w() == 0.0) {
    if (q.x() < 0.0 || (q.x() == 0.0 && (q.y() < 0.0 || (q.y() == 0.0 && q.z() < 0.0)))) sign = -1.0;
  }
  return {sign * q.w(), sign * q.x(), sign * q.y(), sign * q.z()};
}

Mat3 rotation_from_axis_angle(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

std::vector<Mat3> rotation_grid(int n) {
  if (n < 1) throw std::invalid_argument("rotation_grid needs n >= 1");
  // Alexa, "Super-Fibonacci spirals", CVPR 2022.
  constexpr double phi = std::numbers::sqrt2;
  constexpr double psi = 1.533751168755204288118041;
  std::vector<Mat3> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double s = i + 0.5;
    const double r = std::sqrt(s / n);
    const double R = std::sqrt(1.0 - s / n);
    const double alpha = 2.0 * std::numbers::pi * s / phi;
    const double beta = 2.0 * std::numbers::pi * s / psi;
    Eigen::Quaterniond q(r * std::sin(alpha), r * std::cos(alpha), R * std::sin(beta), R * std::cos(beta));
    q.normalize();
    out.push_back(q.toRotationMatrix());
  }
  return out;
}

Mat3 orthonormalize(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Mat3 U = svd.matrixU();
    U.col(2) *= -1.0;
    R = U * svd.matrixV().transpose();
  }
  return R;
}

}  // namespace mslab
