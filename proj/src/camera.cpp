#include "nspl/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace nspl {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera '" + name + "': focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera '" + name + "': image size must be positive");
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-6) throw std::invalid_argument("Camera '" + name + "': rotation is not orthonormal");
}

Camera Camera::downscaled(int factor) const {
  if (factor < 1) throw std::invalid_argument("Camera::downscaled: factor must be >= 1");
  Camera c = *this;
  c.fx /= factor;
  c.fy /= factor;
  c.cx /= factor;
  c.cy /= factor;
  c.width /= factor;
  c.height /= factor;
  return c;
}

Ray pixel_ray(const Camera& cam, int x, int y, double t_near, double t_far) {
  const Vec3 d_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
  return Ray::make(cam.translation, cam.rotation * d_cam, t_near, t_far);
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.rotation.col(0) = right;
  c.rotation.col(1) = down;
  c.rotation.col(2) = forward;
  c.translation = eye;
  c.fx = fx;
  c.fy = fy;
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  c.width = width;
  c.height = height;
  return c;
}

}  // namespace nspl
