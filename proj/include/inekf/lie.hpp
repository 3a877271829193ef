// Closed-form SO(3) and SE2(3) group operations: hat/vee, exp/log,
// adjoint, left Jacobians. Everything here is a pure function over
// plain Eigen values; safe to share across threads.

#ifndef INEKF_LIE_HPP
#define INEKF_LIE_HPP

#include <Eigen/Core>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace inekf {

using Vector9d = Eigen::Matrix<double, 9, 1>;
using Matrix5d = Eigen::Matrix<double, 5, 5>;
using Matrix9d = Eigen::Matrix<double, 9, 9>;

/// Angle below which Taylor expansions replace the Rodrigues terms.
inline constexpr double kSmallAngle = 1e-8;

/// Orthogonality residual above which rotations are re-projected.
inline constexpr double kOrthoTol = 1e-9;

/// @brief Skew-symmetric matrix of a 3-vector, such that skew(a) * b = a x b.
template <typename Derived>
[[nodiscard]] Eigen::Matrix<typename Derived::Scalar, 3, 3>
skew(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, 3, 3> s;
  // clang-format off
  s << Scalar(0), -v(2),      v(1),
       v(2),      Scalar(0), -v(0),
      -v(1),      v(0),      Scalar(0);
  // clang-format on
  return s;
}

/// @brief Inverse of skew(): extract the 3-vector from a skew-symmetric matrix.
template <typename Derived>
[[nodiscard]] Eigen::Matrix<typename Derived::Scalar, 3, 1>
vee(const Eigen::MatrixBase<Derived>& m) {
  return Eigen::Matrix<typename Derived::Scalar, 3, 1>(m(2, 1), m(0, 2),
                                                       m(1, 0));
}

/// @brief SO(3) exponential map (Rodrigues formula, Taylor below kSmallAngle).
[[nodiscard]] inline Eigen::Matrix3d so3Exp(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const Eigen::Matrix3d a = skew(phi);
  if (theta2 < kSmallAngle * kSmallAngle) {
    // second-order Taylor; exact to machine precision at this scale
    return Eigen::Matrix3d::Identity() + a + 0.5 * a * a;
  }
  const double theta = std::sqrt(theta2);
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * a +
         ((1.0 - std::cos(theta)) / theta2) * a * a;
}

/// @brief Left Jacobian of SO(3).
[[nodiscard]] inline Eigen::Matrix3d so3LeftJacobian(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const Eigen::Matrix3d a = skew(phi);
  if (theta2 < kSmallAngle * kSmallAngle) {
    return Eigen::Matrix3d::Identity() + 0.5 * a + (1.0 / 6.0) * a * a;
  }
  const double theta = std::sqrt(theta2);
  const double c1 = (1.0 - std::cos(theta)) / theta2;
  const double c2 = (theta - std::sin(theta)) / (theta2 * theta);
  return Eigen::Matrix3d::Identity() + c1 * a + c2 * a * a;
}

/// @brief Inverse of the left Jacobian of SO(3).
[[nodiscard]] inline Eigen::Matrix3d
so3LeftJacobianInverse(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const Eigen::Matrix3d a = skew(phi);
  if (theta2 < kSmallAngle * kSmallAngle) {
    return Eigen::Matrix3d::Identity() - 0.5 * a + (1.0 / 12.0) * a * a;
  }
  const double theta = std::sqrt(theta2);
  const double c =
      1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() - 0.5 * a + c * a * a;
}

/// @brief SO(3) logarithm. Requires an orthonormal input with trace > -1;
/// rotations near pi take the symmetric-part branch for the axis.
[[nodiscard]] inline Eigen::Vector3d so3Log(const Eigen::Matrix3d& rot) {
  if ((rot.transpose() * rot - Eigen::Matrix3d::Identity()).norm() > 1e-6) {
    throw std::invalid_argument("so3Log: input is not orthonormal");
  }
  const double tr = rot.trace();
  if (tr < -1.0 + 1e-9) {
    throw std::invalid_argument("so3Log: rotation angle too close to pi");
  }
  const double cos_theta = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const Eigen::Vector3d w = vee(rot - rot.transpose());  // = 2 sin(theta) axis

  const double theta = std::acos(cos_theta);
  if (theta < kSmallAngle) {
    return 0.5 * w;
  }
  if (theta > M_PI - 1e-6) {
    // sin(theta) is tiny; recover the axis from the symmetric part and the
    // angle from |w| = 2 sin(theta).
    const double one_minus_cos = 1.0 - cos_theta;
    Eigen::Vector3d axis;
    for (int i = 0; i < 3; ++i) {
      axis(i) = std::sqrt(std::max(0.0, (rot(i, i) - cos_theta) / one_minus_cos));
    }
    // Fix component signs from the largest axis entry using the symmetric
    // off-diagonals, then the overall sign from w when it is usable.
    int k = 0;
    axis.cwiseAbs().maxCoeff(&k);
    for (int i = 0; i < 3; ++i) {
      if (i == k) continue;
      const double sym = rot(i, k) + rot(k, i);
      if (sym < 0.0) axis(i) = -axis(i);
    }
    if (w(k) < 0.0) axis = -axis;
    const double angle = M_PI - std::asin(std::clamp(0.5 * w.norm(), 0.0, 1.0));
    return angle * axis;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

/// @brief Polar projection of a near-rotation onto SO(3).
[[nodiscard]] inline Eigen::Matrix3d orthonormalized(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU |
                                               Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }
  return r;
}

/// Re-project only when the orthogonality residual exceeds kOrthoTol.
[[nodiscard]] inline Eigen::Matrix3d
reorthonormalizeIfNeeded(const Eigen::Matrix3d& m) {
  if ((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() > kOrthoTol) {
    return orthonormalized(m);
  }
  return m;
}

/// @brief Element of SE2(3), stored as the (R, v, p) triple and rendered to
/// its 5x5 matrix form on demand.
struct SE23 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  SE23() = default;
  SE23(const Eigen::Matrix3d& r, const Eigen::Vector3d& v,
       const Eigen::Vector3d& p)
      : rotation(r), velocity(v), position(p) {}

  [[nodiscard]] static SE23 Identity() { return SE23(); }

  [[nodiscard]] Matrix5d matrix() const {
    Matrix5d m = Matrix5d::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = velocity;
    m.block<3, 1>(0, 4) = position;
    return m;
  }

  [[nodiscard]] static SE23 FromMatrix(const Matrix5d& m) {
    return SE23(m.block<3, 3>(0, 0), m.block<3, 1>(0, 3), m.block<3, 1>(0, 4));
  }

  [[nodiscard]] SE23 inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return SE23(rt, -rt * velocity, -rt * position);
  }

  [[nodiscard]] SE23 operator*(const SE23& rhs) const {
    return SE23(reorthonormalizeIfNeeded(rotation * rhs.rotation),
                rotation * rhs.velocity + velocity,
                rotation * rhs.position + position);
  }
};

/// @brief 5x5 Lie-algebra matrix of a 9-vector [xi_R; xi_v; xi_p].
[[nodiscard]] inline Matrix5d se23Hat(const Vector9d& xi) {
  Matrix5d m = Matrix5d::Zero();
  m.block<3, 3>(0, 0) = skew(xi.head<3>());
  m.block<3, 1>(0, 3) = xi.segment<3>(3);
  m.block<3, 1>(0, 4) = xi.tail<3>();
  return m;
}

/// @brief SE2(3) exponential map, closed form via Rodrigues and the left
/// Jacobian applied to the velocity and position columns.
[[nodiscard]] inline SE23 se23Exp(const Vector9d& xi) {
  const Eigen::Vector3d phi = xi.head<3>();
  const Eigen::Matrix3d jl = so3LeftJacobian(phi);
  return SE23(so3Exp(phi), jl * xi.segment<3>(3), jl * xi.tail<3>());
}

/// @brief SE2(3) logarithm, inverse of se23Exp.
[[nodiscard]] inline Vector9d se23Log(const SE23& x) {
  Vector9d xi;
  const Eigen::Vector3d phi = so3Log(x.rotation);
  const Eigen::Matrix3d jl_inv = so3LeftJacobianInverse(phi);
  xi.head<3>() = phi;
  xi.segment<3>(3) = jl_inv * x.velocity;
  xi.tail<3>() = jl_inv * x.position;
  return xi;
}

/// @brief Adjoint of an SE2(3) element:
///   [ R      0  0 ]
///   [ v^x R  R  0 ]
///   [ p^x R  0  R ]
/// satisfying chi * xi^ * chi^-1 = (Ad_chi xi)^.
[[nodiscard]] inline Matrix9d se23Adjoint(const SE23& x) {
  Matrix9d adj = Matrix9d::Zero();
  adj.block<3, 3>(0, 0) = x.rotation;
  adj.block<3, 3>(3, 3) = x.rotation;
  adj.block<3, 3>(6, 6) = x.rotation;
  adj.block<3, 3>(3, 0) = skew(x.velocity) * x.rotation;
  adj.block<3, 3>(6, 0) = skew(x.position) * x.rotation;
  return adj;
}

}  // namespace inekf

#endif  // INEKF_LIE_HPP
