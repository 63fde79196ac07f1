#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nspl/renderer.hpp"
#include "nspl/scene.hpp"
#include "nspl/scene_io.hpp"

namespace nspl {

// ---------------------------------------------------------------------------
// Adaptive quadrature

struct QuadratureConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  int max_depth = 40;

  void validate() const;
};

/// Raised when a subinterval still misses its tolerance at max_depth.
struct QuadratureError : std::runtime_error {
  double achieved = 0.0;  // error estimate of the offending subinterval
  QuadratureError(const std::string& what, double achieved_tol)
      : std::runtime_error(what), achieved(achieved_tol) {}
};

/// Adaptive Simpson with Richardson correction.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, const QuadratureConfig& cfg = {});

/// Integral of the primitive's network value along r over [t_in, t_out].
/// Callers pass a segment inside the ellipsoid, where this equals the masked
/// density.
double quad_integral(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out,
                     const QuadratureConfig& cfg = {}, double xi = 0.0);

// ---------------------------------------------------------------------------
// Finite differences

/// (f(x + h) - f(x - h)) / 2h with h = step * max(1, |x|).
double central_difference(const std::function<double(double)>& f, double x, double step = 1e-5);

struct ParamSelector {
  std::size_t primitive = 0;
  int offset = 0;  // into the ParamLayout record
};

/// Central difference of loss_fn with respect to one scalar of the scene.
double fd_gradient(const std::function<double(const Scene&)>& loss_fn, const Scene& scene, ParamSelector sel,
                   double step = 1e-5);

/// Overwrites one scalar of a primitive through its flat record.
void set_param(Scene& scene, ParamSelector sel, double value);
double get_param(const Scene& scene, ParamSelector sel);

// ---------------------------------------------------------------------------
// Reference renderer

/// Midpoint samples spread evenly over the union of all hit segments of a
/// ray, blended by the discrete volume-rendering sum.
Rgb raymarch_ray(const Scene& scene, const Ray& r, int n_samples, const Rgb& background, double time = 0.0);

Image raymarch_render(const Scene& scene, const Camera& cam, const RenderConfig& cfg, int n_samples);

// ---------------------------------------------------------------------------
// Analytic toy targets

struct AnalyticDensity {
  enum class Shape { kSphere, kBox, kTorus, kUnion };

  Shape shape = Shape::kSphere;
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
  /// Sphere: radius in x. Box: half extents. Torus: major radius in x, tube
  /// radius in y (ring in the local xy plane).
  Vec3 size = Vec3::Ones();
  double value = 20.0;   // interior density
  double edge = 0.02;    // soft-edge width, density ramps linearly across it
  std::vector<AnalyticDensity> children;  // kUnion only

  static AnalyticDensity sphere(double radius = 1.0);
  static AnalyticDensity box(const Vec3& half_extents);
  static AnalyticDensity torus(double major, double minor);
  static AnalyticDensity join(std::vector<AnalyticDensity> parts);
  /// Tags accepted by from_tag: sphere, box, torus, union.
  static AnalyticDensity from_tag(const std::string& tag);
  static std::vector<std::string> tags();

  /// Signed distance (negative inside) of a primitive shape.
  double signed_distance(const Vec3& x) const;
  double density(const Vec3& x) const;
  /// Radius of a sphere about the origin enclosing all non-zero density.
  double bounding_radius() const;
};

struct ToyOptions {
  Rgb albedo = Rgb(0.8, 0.5, 0.3);
  Rgb background = Rgb::Zero();
  double fov_degrees = 50.0;
  /// Ray-march steps per bounding radius.
  int steps_per_radius = 192;
  std::size_t n_points = 2000;  // interior samples written for initialization
};

struct ToyDataset {
  Dataset data;
  std::vector<Vec3> points;
};

/// Cameras on a Fibonacci hemisphere (z up) of radius 3x the shape's bounding
/// radius, looking at the origin; the seed rotates the spiral and draws the
/// point samples. Every fourth view is a test view.
ToyDataset gen_toy_dataset(const AnalyticDensity& shape, int n_views, int resolution, std::uint64_t seed,
                           const ToyOptions& opts = {});

}  // namespace nspl
