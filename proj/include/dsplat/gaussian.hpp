#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "dsplat/common.hpp"

namespace dsplat {

using Eigen::Matrix2d;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::Vector4d;
using Feature16 = Eigen::Matrix<double, 16, 1>;
using Color9 = Eigen::Matrix<double, 9, 1>;

constexpr double kScaleFloor = 1e-6;
constexpr double kQuatUnitTol = 1e-6;
constexpr double kNearPlane = 1e-4;
constexpr double kCov2dLowPass = 0.3;  // px^2 anti-aliasing floor

// One splat primitive in canonical (time-independent) configuration.
// Quaternions are stored (w, x, y, z).
struct Gaussian {
  int id = 0;
  Vector3d mu_c = Vector3d::Zero();
  Vector4d rot_c = Vector4d(1, 0, 0, 0);
  Vector3d scale_c = Vector3d::Ones();
  double base_opacity = 1.0;
  Vector3d color = Vector3d::Zero();          // SH degree-0 term, in [0,1]
  Color9 color1 = Color9::Zero();             // optional degree-1 coefficients
  std::optional<Feature16> feature;           // present only for dynamic splats
};

struct Scene {
  int sh_degree = 0;  // 0 or 1
  std::vector<Gaussian> splats;

  size_t size() const { return splats.size(); }
  Vector3d centroid() const {
    Vector3d c = Vector3d::Zero();
    for (const auto& g : splats) c += g.mu_c;
    return splats.empty() ? c : Vector3d(c / double(splats.size()));
  }
};

// Pinhole camera, world-to-camera convention x_cam = R x_world + t.
struct Camera {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  void validate() const {
    if (width < 1 || height < 1) throw InvalidInputError("camera: width/height must be >= 1");
    if (((rotation.transpose() * rotation) - Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw InvalidInputError("camera: rotation is not orthonormal");
  }

  Vector3d position() const { return -rotation.transpose() * translation; }
  Vector3d to_camera_space(const Vector3d& world) const { return rotation * world + translation; }

  // Projects a world point; nullopt when behind the near plane.
  std::optional<Vector3d> project_point(const Vector3d& world) const {
    const Vector3d p = to_camera_space(world);
    if (p.z() <= kNearPlane) return std::nullopt;
    return Vector3d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy, p.z());
  }

  // Inverse of project_point for a pixel coordinate and known depth.
  Vector3d unproject(double u, double v, double depth) const {
    const Vector3d p((u - cx) / fx * depth, (v - cy) / fy * depth, depth);
    return rotation.transpose() * (p - translation);
  }
};

// Rotation matrix from a unit quaternion (w,x,y,z), written out as the
// polynomial form so its algebraic derivative below matches exactly.
inline Matrix3d rotation_matrix(const Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// d(rotation_matrix)/dq_i, i over (w,x,y,z).
inline std::array<Matrix3d, 4> rotation_matrix_jacobian(const Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Matrix3d, 4> j;
  j[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  j[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  j[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  j[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return j;
}

// Sigma = R S S^T R^T with S = diag(scale).
inline Matrix3d covariance_from_rotation_scale(const Vector4d& rot, const Vector3d& scale) {
  if (std::abs(rot.norm() - 1.0) > kQuatUnitTol)
    throw InvalidInputError("covariance_from_rotation_scale: quaternion not unit norm");
  if ((scale.array() <= 0).any())
    throw InvalidInputError("covariance_from_rotation_scale: scales must be positive");
  const Matrix3d r = rotation_matrix(rot);
  const Matrix3d m = r * scale.asDiagonal();
  return m * m.transpose();
}

// Backward of Sigma = R(q) diag(s) diag(s) R(q)^T for an upstream full-matrix
// gradient g = dL/dSigma. No normalization chain here; q is taken as given.
inline void covariance_backward(const Vector4d& rot, const Vector3d& scale, const Matrix3d& g,
                                Vector4d* d_rot, Vector3d* d_scale) {
  const Matrix3d r = rotation_matrix(rot);
  const Matrix3d m = r * scale.asDiagonal();
  const Matrix3d dm = (g + g.transpose()) * m;  // Sigma = M M^T
  const Matrix3d dr = dm * scale.asDiagonal();
  const auto jac = rotation_matrix_jacobian(rot);
  for (int i = 0; i < 4; ++i) (*d_rot)[i] = (dr.array() * jac[i].array()).sum();
  for (int i = 0; i < 3; ++i) (*d_scale)[i] = r.col(i).dot(dm.col(i));
}

// Density of an anisotropic Gaussian at x; 1 exactly at the mean.
inline double eval_density(const Vector3d& mu, const Matrix3d& cov, const Vector3d& x) {
  Matrix3d c = cov;
  Eigen::SelfAdjointEigenSolver<Matrix3d> es(c);
  const Vector3d ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff())) {
    c += 1e-8 * Matrix3d::Identity();
    Eigen::SelfAdjointEigenSolver<Matrix3d> es2(c);
    if (es2.eigenvalues().minCoeff() <= 0)
      throw NumericalError("eval_density: covariance singular after regularization");
  }
  const Vector3d d = x - mu;
  const double m = d.dot(c.ldlt().solve(d));
  return std::exp(-0.5 * m);
}

// A Gaussian after perspective projection: screen mean, 2D covariance, depth.
struct ProjectedGaussian {
  Vector2d mu2d;
  Matrix2d cov2d;
  double depth;
};

// EWA-style projection: cov2d = J W Sigma W^T J^T + low-pass floor, with J the
// pinhole Jacobian at the mean and W the camera rotation. nullopt = culled.
inline std::optional<ProjectedGaussian> project_gaussian(const Vector3d& mu, const Matrix3d& cov,
                                                         const Camera& cam) {
  const Vector3d p = cam.to_camera_space(mu);
  if (p.z() <= kNearPlane) return std::nullopt;
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz,
         0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> a = jac * cam.rotation;
  ProjectedGaussian out;
  out.mu2d = Vector2d(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
  out.cov2d = a * cov * a.transpose() + kCov2dLowPass * Matrix2d::Identity();
  out.depth = p.z();
  return out;
}

// Backward of project_gaussian. Upstream gradients are full-matrix for cov2d.
// Returns gradients w.r.t. the world-space mean and 3D covariance.
inline void project_backward(const Vector3d& mu, const Matrix3d& cov, const Camera& cam,
                             const Vector2d& d_mu2d, const Matrix2d& d_cov2d, double d_depth,
                             Vector3d* d_mu, Matrix3d* d_cov) {
  const Vector3d p = cam.to_camera_space(mu);
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz,
         0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> a = jac * cam.rotation;

  *d_cov = a.transpose() * d_cov2d * a;

  // mean path: mu2d = (fx px/pz + cx, fy py/pz + cy)
  Vector3d d_p(cam.fx * iz * d_mu2d.x(),
               cam.fy * iz * d_mu2d.y(),
               -cam.fx * p.x() * iz * iz * d_mu2d.x() - cam.fy * p.y() * iz * iz * d_mu2d.y());

  // covariance path through the Jacobian's dependence on p
  const Eigen::Matrix<double, 2, 3> d_a = (d_cov2d + d_cov2d.transpose()) * a * cov;
  const Eigen::Matrix<double, 2, 3> d_jac = d_a * cam.rotation.transpose();
  d_p.x() += -cam.fx * iz * iz * d_jac(0, 2);
  d_p.y() += -cam.fy * iz * iz * d_jac(1, 2);
  d_p.z() += -cam.fx * iz * iz * d_jac(0, 0) - cam.fy * iz * iz * d_jac(1, 1) +
             2 * cam.fx * p.x() * iz * iz * iz * d_jac(0, 2) +
             2 * cam.fy * p.y() * iz * iz * iz * d_jac(1, 2);

  d_p.z() += d_depth;
  *d_mu = cam.rotation.transpose() * d_p;
}

// View-dependent color from SH degree 0 (+ optional degree 1), clamped to
// [0,1]. dir is the unit vector from camera toward the splat.
inline Vector3d sh_color(const Gaussian& g, int sh_degree, const Vector3d& dir,
                         Eigen::Matrix<double, 3, 4>* basis_out = nullptr) {
  constexpr double kSh1 = 0.48860251190291992;
  Vector3d c = g.color;
  if (sh_degree >= 1) {
    const double b1 = -kSh1 * dir.y(), b2 = kSh1 * dir.z(), b3 = -kSh1 * dir.x();
    for (int ch = 0; ch < 3; ++ch)
      c[ch] += b1 * g.color1[ch] + b2 * g.color1[3 + ch] + b3 * g.color1[6 + ch];
    if (basis_out) {
      for (int ch = 0; ch < 3; ++ch) {
        (*basis_out)(ch, 0) = 1.0;
        (*basis_out)(ch, 1) = b1;
        (*basis_out)(ch, 2) = b2;
        (*basis_out)(ch, 3) = b3;
      }
    }
  } else if (basis_out) {
    basis_out->setZero();
    basis_out->col(0).setOnes();
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace dsplat
