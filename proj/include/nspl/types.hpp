#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace nspl {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Linear RGB triple. No clamping is implied.
using Rgb = Eigen::Vector3d;

}  // namespace nspl
