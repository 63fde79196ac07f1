#pragma once

#include <string>

#include "nspl/geometry.hpp"

namespace nspl {

/// Pinhole camera. `rotation`/`translation` map camera to world; the camera
/// looks along +z with +y pointing down the image.
struct Camera {
  std::string name;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double time = 0.0;  // normalized timestamp for temporal scenes

  void validate() const;
  const Vec3& position() const { return translation; }
  /// Intrinsics and image size divided by an integer factor.
  Camera downscaled(int factor) const;
};

/// Ray through the center of pixel (x, y).
Ray pixel_ray(const Camera& cam, int x, int y, double t_near, double t_far);

/// Camera at `eye` looking at `target`, with `up` the approximate world up.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height);

}  // namespace nspl
