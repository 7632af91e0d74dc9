#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pog {

/// Wraps an angle into (-pi, pi]. Throws std::domain_error on NaN/inf.
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  if (!std::isfinite(a)) throw std::domain_error("wrap_angle: non-finite angle");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  Scalar r = std::fmod(a + pi, two_pi);
  if (r <= 0) r += two_pi;
  r -= pi;
  return r <= -pi ? pi : r;
}

/// Planar pose (x, y, heading). Heading is counterclockwise from +x and is
/// kept wrapped to (-pi, pi].
template <typename Scalar>
class Pose2 {
 public:
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Pose2() = default;
  Pose2(Scalar x, Scalar y, Scalar theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {}
  explicit Pose2(const Vector3& v) : Pose2(v(0), v(1), v(2)) {}

  static Pose2 Identity() { return Pose2(); }

  Scalar x() const { return x_; }
  Scalar y() const { return y_; }
  Scalar theta() const { return theta_; }
  Vector2 translation() const { return Vector2(x_, y_); }
  Vector3 vector() const { return Vector3(x_, y_, theta_); }

  /// Maps a point expressed in this pose's frame to the parent frame.
  Vector2 operator*(const Vector2& p) const {
    const Scalar c = std::cos(theta_), s = std::sin(theta_);
    return Vector2(x_ + c * p.x() - s * p.y(), y_ + s * p.x() + c * p.y());
  }

  template <typename Other>
  Pose2<Other> cast() const {
    return Pose2<Other>(Other(x_), Other(y_), Other(theta_));
  }

  friend bool operator==(const Pose2&, const Pose2&) = default;

 private:
  Scalar x_{0};
  Scalar y_{0};
  Scalar theta_{0};
};

using Pose2d = Pose2<double>;

/// a ⊕ b: b is expressed in a's frame; the result is in a's parent frame.
template <typename Scalar>
Pose2<Scalar> compose(const Pose2<Scalar>& a, const Pose2<Scalar>& b) {
  const Scalar c = std::cos(a.theta()), s = std::sin(a.theta());
  return Pose2<Scalar>(a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(),
                       a.theta() + b.theta());
}

template <typename Scalar>
Pose2<Scalar> invert(const Pose2<Scalar>& p) {
  const Scalar c = std::cos(p.theta()), s = std::sin(p.theta());
  return Pose2<Scalar>(-(c * p.x() + s * p.y()), s * p.x() - c * p.y(), -p.theta());
}

/// Proper rigid motion in 3D: y = R x + t.
template <typename Scalar>
class RigidTransform3 {
 public:
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  static constexpr double kValidityTolerance = 1e-9;

  RigidTransform3() = default;

  /// Throws std::invalid_argument unless the rotation is orthonormal with
  /// determinant +1 (to within kValidityTolerance).
  RigidTransform3(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!is_rotation(rotation_))
      throw std::invalid_argument("RigidTransform3: rotation is not a proper rotation");
    if (!translation_.allFinite())
      throw std::invalid_argument("RigidTransform3: non-finite translation");
  }

  static RigidTransform3 Identity() { return RigidTransform3(); }

  static RigidTransform3 Translation(const Vector3& t) { return RigidTransform3(Matrix3::Identity(), t); }

  static RigidTransform3 FromAngleAxis(Scalar angle, const Vector3& axis, const Vector3& t = Vector3::Zero()) {
    return RigidTransform3(Eigen::AngleAxis<Scalar>(angle, axis.normalized()).toRotationMatrix(), t);
  }

  static bool is_rotation(const Matrix3& r, double tol = kValidityTolerance) {
    if (!r.allFinite()) return false;
    const Scalar ortho_err = (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff();
    return ortho_err <= tol && std::abs(r.determinant() - Scalar(1)) <= tol;
  }

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Vector3 operator*(const Vector3& p) const { return rotation_ * p + translation_; }

  RigidTransform3 operator*(const RigidTransform3& other) const {
    RigidTransform3 out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  RigidTransform3 inverse() const {
    RigidTransform3 out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
  }

  /// Rotation angle of this transform, in [0, pi].
  Scalar angle() const {
    const Scalar c = std::clamp((rotation_.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
    return std::acos(c);
  }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotation_;
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

 private:
  Matrix3 rotation_ = Matrix3::Identity();
  Vector3 translation_ = Vector3::Zero();
};

using RigidTransform3d = RigidTransform3<double>;

/// World-from-sensor transform for a planar robot pose and a fixed
/// body-from-sensor mounting transform. The body frame sits on the floor.
template <typename Scalar>
RigidTransform3<Scalar> pose2_to_transform3(const Pose2<Scalar>& p, const RigidTransform3<Scalar>& mount) {
  const Eigen::Matrix<Scalar, 3, 3> rz =
      Eigen::AngleAxis<Scalar>(p.theta(), Eigen::Matrix<Scalar, 3, 1>::UnitZ()).toRotationMatrix();
  const RigidTransform3<Scalar> planar(rz, Eigen::Matrix<Scalar, 3, 1>(p.x(), p.y(), Scalar(0)));
  return planar * mount;
}

/// Projects a 3D world-from-body transform onto the floor plane.
template <typename Scalar>
Pose2<Scalar> planar_pose(const RigidTransform3<Scalar>& world_from_body) {
  const auto& r = world_from_body.rotation();
  return Pose2<Scalar>(world_from_body.translation().x(), world_from_body.translation().y(),
                       std::atan2(r(1, 0), r(0, 0)));
}

template <typename Scalar>
using Covariance3 = Eigen::Matrix<Scalar, 3, 3>;
using Covariance3d = Covariance3<double>;

template <typename Derived>
typename Derived::PlainObject symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

/// Symmetric within sym_tol and every eigenvalue >= -psd_tol.
template <typename Derived>
bool is_valid_covariance(const Eigen::MatrixBase<Derived>& p, double sym_tol = 1e-12, double psd_tol = 1e-12) {
  if (!p.allFinite()) return false;
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > sym_tol) return false;
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(symmetrized(p), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -psd_tol;
}

/// Pinhole camera model. Camera frame: +z along the optical axis, +x right,
/// +y down. Pixel (u, v) has column u and row v.
struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
  double max_depth = 10.0;

  bool valid() const {
    return std::isfinite(fx) && std::isfinite(fy) && fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 &&
           cx < width && cy >= 0 && cy < height && std::isfinite(max_depth) && max_depth > 0;
  }
  void validate() const {
    if (!valid()) throw std::invalid_argument("CameraIntrinsics: invalid parameters");
  }
};

/// Body-from-camera mount for a forward-looking camera pitched down by
/// `pitch` radians, located at `position` in the body frame
/// (x forward, y left, z up).
inline RigidTransform3d forward_camera_mount(const Eigen::Vector3d& position, double pitch) {
  const double c = std::cos(pitch), s = std::sin(pitch);
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(0, -1, 0);
  r.col(1) = Eigen::Vector3d(-s, 0, -c);
  r.col(2) = Eigen::Vector3d(c, 0, -s);
  return RigidTransform3d(r, position);
}

}  // namespace pog
