#pragma once

#include <optional>

#include "nspl/types.hpp"

namespace nspl {

/// A view ray r(t) = origin + t * direction restricted to [t_near, t_far].
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1e4;

  /// Builds a ray with a normalized direction. Throws on a zero direction or
  /// an empty/negative parameter range.
  static Ray make(const Vec3& origin, const Vec3& direction, double t_near, double t_far);
};

/// Oriented ellipsoid with per-axis semi-lengths. The quaternion is stored
/// raw (w, x, y, z) and normalized whenever it is read.
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);

  static Ellipsoid make(const Vec3& center, const Vec3& scale, const Vec4& rotation);

  Mat3 rotation_matrix() const;
  double max_scale() const { return scale.cwiseAbs().maxCoeff(); }
};

struct SegmentHit {
  double t_in = 0.0;
  double t_out = 0.0;
  // Set when the corresponding endpoint was clipped to the ray bounds rather
  // than lying on the ellipsoid surface.
  bool entry_clipped = false;
  bool exit_clipped = false;

  double length() const { return t_out - t_in; }
};

/// Rotation matrix of the normalized quaternion (w, x, y, z).
/// Throws std::invalid_argument for a zero quaternion.
Mat3 quat_to_rotation_matrix(const Vec4& q);

/// Pulls dL/dR back to dL/dq for the raw (unnormalized) quaternion q.
Vec4 quat_to_rotation_matrix_backward(const Vec4& q, const Mat3& grad_rotation);

/// R^T (x - center) / scale: maps the ellipsoid onto the unit sphere.
Vec3 world_to_local(const Ellipsoid& e, const Vec3& x);

/// Exact overlap of the ray's parameter range with the ellipsoid interior.
/// Tangent and degenerate overlaps are reported as misses.
std::optional<SegmentHit> intersect(const Ellipsoid& e, const Ray& r);

/// Cached per-ellipsoid frame used by the rasterizer to avoid recomputing the
/// rotation matrix for every ray.
struct EllipsoidFrame {
  Vec3 center;
  Vec3 scale;
  Vec3 inv_scale;
  Mat3 rotation;  // world-from-local

  explicit EllipsoidFrame(const Ellipsoid& e);
};

std::optional<SegmentHit> intersect(const EllipsoidFrame& f, const Ray& r);

/// Derivatives of one intersection endpoint with respect to the geometry.
struct EndpointGradient {
  Vec3 d_center = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
  Mat3 d_rotation = Mat3::Zero();  // w.r.t. the entries of the rotation matrix
};

/// Implicit-function derivative dt/dtheta of a root t of |world_to_local(r(t))|^2 = 1.
/// The root must lie on the surface (i.e. not be a clipped endpoint).
EndpointGradient surface_root_gradient(const EllipsoidFrame& f, const Ray& r, double t);

/// Implicit value |world_to_local(x)|^2; below one inside the ellipsoid.
double implicit_value(const Ellipsoid& e, const Vec3& x);

}  // namespace nspl
