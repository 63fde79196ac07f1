#include "nspl/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace nspl {

namespace {

// Squared half-chord (in t units) below which a hit counts as tangent.
constexpr double kTangentEps = 1e-12;

}  // namespace

Ray Ray::make(const Vec3& origin, const Vec3& direction, double t_near, double t_far) {
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("Ray::make: direction must be nonzero and finite");
  }
  if (!(t_near >= 0.0) || !(t_far > t_near)) {
    throw std::invalid_argument("Ray::make: require 0 <= t_near < t_far");
  }
  return Ray{origin, direction / n, t_near, t_far};
}

Ellipsoid Ellipsoid::make(const Vec3& center, const Vec3& scale, const Vec4& rotation) {
  if ((scale.array() <= 0.0).any()) {
    throw std::invalid_argument("Ellipsoid::make: scale components must be positive");
  }
  const double n = rotation.norm();
  if (!(n > 0.0)) {
    throw std::invalid_argument("Ellipsoid::make: zero quaternion");
  }
  return Ellipsoid{center, scale, rotation / n};
}

Mat3 Ellipsoid::rotation_matrix() const { return quat_to_rotation_matrix(rotation); }

Mat3 quat_to_rotation_matrix(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 0.0)) {
    throw std::invalid_argument("quat_to_rotation_matrix: zero quaternion");
  }
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 quat_to_rotation_matrix_backward(const Vec4& q, const Mat3& g) {
  const double n = q.norm();
  const Vec4 u = q / n;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Vec4 d;
  d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
  d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
  d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  // Project out the radial component: the rotation is invariant to |q|.
  return (d - u * u.dot(d)) / n;
}

Vec3 world_to_local(const Ellipsoid& e, const Vec3& x) {
  return (e.rotation_matrix().transpose() * (x - e.center)).cwiseQuotient(e.scale);
}

double implicit_value(const Ellipsoid& e, const Vec3& x) { return world_to_local(e, x).squaredNorm(); }

EllipsoidFrame::EllipsoidFrame(const Ellipsoid& e)
    : center(e.center), scale(e.scale), inv_scale(e.scale.cwiseInverse()), rotation(e.rotation_matrix()) {}

std::optional<SegmentHit> intersect(const EllipsoidFrame& f, const Ray& r) {
  const Vec3 o = (f.rotation.transpose() * (r.origin - f.center)).cwiseProduct(f.inv_scale);
  const Vec3 d = (f.rotation.transpose() * r.direction).cwiseProduct(f.inv_scale);
  // a t^2 + 2 b t + c = 0 in the original ray parameter.
  const double a = d.squaredNorm();
  const double b = o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = b * b - a * c;
  if (!(disc / (a * a) > kTangentEps)) return std::nullopt;

  const double s = std::sqrt(disc);
  const double q = b >= 0.0 ? -(b + s) : -(b - s);
  double t0 = q / a;
  double t1 = c / q;
  if (t0 > t1) std::swap(t0, t1);

  SegmentHit hit{t0, t1, false, false};
  if (hit.t_in < r.t_near) {
    hit.t_in = r.t_near;
    hit.entry_clipped = true;
  }
  if (hit.t_out > r.t_far) {
    hit.t_out = r.t_far;
    hit.exit_clipped = true;
  }
  if (!(hit.t_out - hit.t_in > 0.0)) return std::nullopt;
  return hit;
}

std::optional<SegmentHit> intersect(const Ellipsoid& e, const Ray& r) {
  return intersect(EllipsoidFrame(e), r);
}

EndpointGradient surface_root_gradient(const EllipsoidFrame& f, const Ray& r, double t) {
  // g(t, theta) = |R^T (o + t d - c) / s|^2 - 1 = 0  =>  dt/dtheta = -g_theta / g_t.
  const Vec3 v = r.origin + t * r.direction - f.center;
  const Vec3 p = (f.rotation.transpose() * v).cwiseProduct(f.inv_scale);
  const Vec3 p_over_s = p.cwiseProduct(f.inv_scale);
  const Vec3 d_local = (f.rotation.transpose() * r.direction).cwiseProduct(f.inv_scale);
  const double g_t = 2.0 * p.dot(d_local);

  EndpointGradient out;
  if (g_t == 0.0) return out;
  const double k = -1.0 / g_t;
  out.d_center = k * (-2.0 * (f.rotation * p_over_s));
  out.d_scale = k * (-2.0 * p.cwiseProduct(p_over_s));
  // dg/dR_ij = 2 v_i p_j / s_j
  out.d_rotation = k * 2.0 * v * p_over_s.transpose();
  return out;
}

}  // namespace nspl
