#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nspl/appearance.hpp"
#include "nspl/geometry.hpp"

namespace nspl {

/// Static shape of a primitive: network width, frequency multiplier, SH
/// degree and the optional temporal extension.
struct PrimitiveConfig {
  int hidden = 8;
  double omega = 30.0;
  int sh_degree = 3;
  bool temporal = false;
  int poly_order = 4;
  int fourier_order = 4;

  void validate() const;
  bool operator==(const PrimitiveConfig&) const = default;
};

/// Shallow periodic density network
///   f(x) = w2 . cos(omega (W1 x + b1)) + b2
/// with optional temporal phase weights (empty when temporal mode is off).
struct DensityNet {
  double omega = 30.0;
  std::vector<Vec3> w1;  // one row per hidden unit
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
  std::vector<double> wt;

  static DensityNet zeros(int hidden, double omega, bool temporal);
  int width() const { return static_cast<int>(w1.size()); }
  bool temporal() const { return !wt.empty(); }
};

struct NeuralPrimitive {
  Ellipsoid geometry;
  DensityNet net;
  SHCoefficients sh;
  std::optional<TemporalSH> temporal_sh;

  static NeuralPrimitive zeros(const PrimitiveConfig& cfg);
  PrimitiveConfig config() const;
};

/// Offsets of every trainable block inside a flat per-primitive record.
/// Order: center, scale, rotation, W1 (row-major), b1, W2, b2, SH
/// (coefficient-major RGB), then Wt and the temporal SH series if enabled.
struct ParamLayout {
  int hidden = 8;
  int sh_count = 16;
  bool temporal = false;
  int poly_order = 0;
  int fourier_order = 0;

  int center = 0, scale = 3, rotation = 6, w1 = 10, b1 = 0, w2 = 0, b2 = 0, sh = 0;
  int wt = -1, poly = -1, four_cos = -1, four_sin = -1;
  int size = 0;

  explicit ParamLayout(const PrimitiveConfig& cfg);
  ParamLayout() : ParamLayout(PrimitiveConfig{}) {}

  /// Number of scalars in the density network (W1, b1, W2, b2).
  int mlp_size() const { return 5 * hidden + 1; }
};

void pack(const NeuralPrimitive& p, const ParamLayout& layout, std::span<double> out);
NeuralPrimitive unpack(const PrimitiveConfig& cfg, const ParamLayout& layout, std::span<const double> in);

/// Reverse-mode accumulator with one slot per trainable scalar.
struct NetGradient {
  std::vector<Vec3> d_w1;
  std::vector<double> d_b1;
  std::vector<double> d_w2;
  double d_b2 = 0.0;
  Vec3 d_center = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
  Vec4 d_rotation = Vec4::Zero();
  std::vector<double> d_wt;

  static NetGradient zeros(int hidden, bool temporal);
  void reset();
};

/// (x - center) / ||scale||_inf.
Vec3 normalize_input(const NeuralPrimitive& p, const Vec3& x);

/// Pointwise density; zero outside the bounding ellipsoid. Used only for
/// verification, the renderer integrates in closed form.
double density(const NeuralPrimitive& p, const Vec3& x);

/// The network value w2 . cos(phase) + b2 at x without the ellipsoid mask;
/// `xi` only matters for temporal primitives.
double network_value(const NeuralPrimitive& p, const Vec3& x, double xi = 0.0);

/// Density at normalized time xi; requires temporal weights.
double temporal_density(const NeuralPrimitive& p, const Vec3& x, double xi);

/// Closed-form integral of the density along r over [t_in, t_out]. `xi` is
/// ignored for static primitives.
double line_integral(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out, double xi = 0.0);

/// The same integral written as the plain antiderivative difference
/// w2 (sin(a + h t_out) - sin(a + h t_in)) / h. Singular as h -> 0; kept for
/// comparison against the stable product form.
double line_integral_difference_form(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out,
                                     double xi = 0.0);

/// Splatting opacity 1 - exp(-max(0, I)) over the ray's overlap with the
/// bounding ellipsoid; zero on a miss.
double kernel(const NeuralPrimitive& p, const Ray& r, double xi = 0.0);

/// Accumulates upstream * d(kernel)/d(theta) into `grad`.
void kernel_backward(const NeuralPrimitive& p, const Ray& r, double upstream, NetGradient& grad, double xi = 0.0);

/// sin(u) / u with the removable singularity filled in.
double sinc(double u);
/// d/du sinc(u).
double sinc_derivative(double u);

/// Per-render cache of derived primitive quantities.
struct PreparedPrimitive {
  const NeuralPrimitive* prim = nullptr;
  EllipsoidFrame frame;
  double inv_max_scale = 1.0;
  int max_axis = 0;
  double bounding_radius = 0.0;

  explicit PreparedPrimitive(const NeuralPrimitive& p);
};

struct KernelSample {
  SegmentHit hit;
  double integral = 0.0;
  double kappa = 0.0;
};

/// Closed-form integral over an already computed hit segment.
double segment_integral(const PreparedPrimitive& pp, const Ray& r, const SegmentHit& hit, double xi);

/// Intersection, closed-form integral and opacity in one call.
std::optional<KernelSample> kernel_forward(const PreparedPrimitive& pp, const Ray& r, double xi);

/// Adds upstream * dI/dtheta (with endpoint motion) into a flat record
/// gradient laid out per `layout`.
void integral_backward_into(const PreparedPrimitive& pp, const Ray& r, const SegmentHit& hit, double xi,
                            double upstream, const ParamLayout& layout, std::span<double> grad);

}  // namespace nspl
