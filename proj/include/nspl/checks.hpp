#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nspl/neural_field.hpp"
#include "nspl/renderer.hpp"
#include "nspl/scene.hpp"

namespace nspl {

/// Outcome of one oracle suite. `worst_case` describes the case with the
/// largest error so it can be replayed with the printed seed.
struct CheckReport {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst_error = 0.0;
  std::string worst_case;
  std::vector<std::string> failure_details;  // first few failing cases
  double seconds = 0.0;
  /// Suite-specific extras, e.g. pass fractions.
  std::vector<std::pair<std::string, double>> extras;

  void note_failure(const std::string& detail);
};

/// Per-case generator seed derived from the suite seed.
std::uint64_t case_seed(std::uint64_t seed, std::uint64_t index);

struct IntegralCheckOptions {
  std::size_t cases = 10000;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;  // |I_closed - I_quad| <= tolerance * (1 + |I_quad|)
  double min_scale = 0.1;
  double max_scale = 10.0;
  int hidden = 8;
  double omega = 30.0;
  bool temporal = false;  // random Wt and normalized time
};

/// Random primitive and a ray that passes through its ellipsoid.
struct IntegralCase {
  NeuralPrimitive prim;
  Ray ray;
  SegmentHit hit;
  double xi = 0.0;
};
IntegralCase make_integral_case(const IntegralCheckOptions& opts, std::uint64_t index);

CheckReport check_integrals(const IntegralCheckOptions& opts);

struct PropertyCheckOptions {
  std::size_t cases = 10000;
  std::uint64_t seed = 0;
  double identity_tolerance = 1e-9;  // additivity and origin shift
  double form_tolerance = 1e-7;      // stable vs difference form
  double min_phase_span = 1e-3;      // |h * dt| threshold for the form comparison
};

/// Segment additivity, origin-shift invariance and agreement of the product
/// form with the antiderivative difference.
CheckReport check_integral_properties(const PropertyCheckOptions& opts);

struct GradientCheckOptions {
  std::uint64_t seed = 0;
  int primitives = 4;
  int resolution = 16;
  double step = 1e-5;
  double tolerance = 1e-3;
  double loose_tolerance = 1e-2;
  double required_fraction = 0.95;
  double abs_floor = 1e-7;  // relative error denominator floor
};

CheckReport check_gradients(const GradientCheckOptions& opts);

struct RenderOracleOptions {
  std::uint64_t seed = 0;
  int primitives = 20;
  int resolution = 32;
  int samples = 4096;
  double tolerance = 1e-4;
  int threads = 0;
};

/// Scene of primitives with pairwise disjoint bounding spheres.
Scene make_disjoint_scene(int primitives, std::uint64_t seed);
Camera oracle_camera(int resolution);

CheckReport check_render_oracle(const RenderOracleOptions& opts);

struct TemporalCheckOptions {
  std::uint64_t seed = 0;
  int resolution = 24;
  std::vector<double> times = {-1.0, -0.37, 0.0, 0.5, 1.0};
  std::size_t integral_cases = 2000;
  double tolerance = 1e-6;
};

/// Zero temporal weights render bit-identically to static mode; random Wt
/// integrals match quadrature.
CheckReport check_temporal(const TemporalCheckOptions& opts);

}  // namespace nspl
