#include "nspl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "nspl/parallel.hpp"

namespace nspl {

// ---------------------------------------------------------------------------
// Quadrature

void QuadratureConfig::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw std::invalid_argument("QuadratureConfig: tolerances must be > 0");
  if (max_depth < 1) throw std::invalid_argument("QuadratureConfig: max_depth must be >= 1");
}

namespace {

struct SimpsonState {
  const std::function<double(double)>& f;
  int max_depth;
};

double simpson_rec(const SimpsonState& s, double a, double b, double fa, double fm, double fb, double whole,
                   double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = s.f(lm), frm = s.f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= s.max_depth) {
    std::ostringstream msg;
    msg << "adaptive_simpson: max depth " << s.max_depth << " reached on [" << a << ", " << b
        << "], achieved error estimate " << std::abs(delta) / 15.0 << " vs tolerance " << tol;
    throw QuadratureError(msg.str(), std::abs(delta) / 15.0);
  }
  return simpson_rec(s, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         simpson_rec(s, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, const QuadratureConfig& cfg) {
  cfg.validate();
  if (!(a <= b)) throw std::invalid_argument("adaptive_simpson: requires a <= b");
  if (a == b) return 0.0;
  // A coarse composite pass sets the relative scale and keeps a periodic
  // integrand from fooling the first error estimate.
  constexpr int kPanels = 8;
  const double h = (b - a) / kPanels;
  std::vector<double> fx(2 * kPanels + 1);
  for (int i = 0; i <= 2 * kPanels; ++i) fx[i] = f(i == 2 * kPanels ? b : a + 0.5 * h * i);
  double coarse = 0.0;
  for (int i = 0; i < kPanels; ++i) coarse += h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
  const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(coarse));
  const SimpsonState s{f, cfg.max_depth};
  double sum = 0.0;
  for (int i = 0; i < kPanels; ++i) {
    const double lo = a + h * i, hi = i + 1 == kPanels ? b : a + h * (i + 1);
    const double whole = (hi - lo) / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
    sum += simpson_rec(s, lo, hi, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2], whole, tol / kPanels, 1);
  }
  return sum;
}

double quad_integral(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out, const QuadratureConfig& cfg,
                     double xi) {
  if (!(t_in <= t_out)) throw std::invalid_argument("quad_integral: requires t_in <= t_out");
  const auto f = [&](double t) { return network_value(p, r.origin + t * r.direction, xi); };
  return adaptive_simpson(f, t_in, t_out, cfg);
}

// ---------------------------------------------------------------------------
// Finite differences

double central_difference(const std::function<double(double)>& f, double x, double step) {
  const double h = step * std::max(1.0, std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double get_param(const Scene& scene, ParamSelector sel) {
  const ParamLayout l = scene.layout();
  if (sel.primitive >= scene.size() || sel.offset < 0 || sel.offset >= l.size) {
    throw std::out_of_range("ParamSelector outside the scene");
  }
  std::vector<double> rec(l.size);
  pack(scene.primitives[sel.primitive], l, rec);
  return rec[sel.offset];
}

void set_param(Scene& scene, ParamSelector sel, double value) {
  const ParamLayout l = scene.layout();
  if (sel.primitive >= scene.size() || sel.offset < 0 || sel.offset >= l.size) {
    throw std::out_of_range("ParamSelector outside the scene");
  }
  std::vector<double> rec(l.size);
  pack(scene.primitives[sel.primitive], l, rec);
  rec[sel.offset] = value;
  scene.primitives[sel.primitive] = unpack(scene.config, l, rec);
}

double fd_gradient(const std::function<double(const Scene&)>& loss_fn, const Scene& scene, ParamSelector sel,
                   double step) {
  Scene probe = scene;
  const double x = get_param(scene, sel);
  return central_difference(
      [&](double v) {
        set_param(probe, sel, v);
        return loss_fn(probe);
      },
      x, step);
}

// ---------------------------------------------------------------------------
// Reference renderer

Rgb raymarch_ray(const Scene& scene, const Ray& r, int n_samples, const Rgb& background, double time) {
  if (n_samples < 2) throw std::invalid_argument("raymarch_ray: n_samples must be >= 2");
  struct Seg {
    std::size_t index;
    double t_in, t_out;
  };
  std::vector<Seg> segs;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (auto h = intersect(scene.primitives[i].geometry, r)) segs.push_back({i, h->t_in, h->t_out});
  }
  if (segs.empty()) return background;

  // Union of the segments as disjoint intervals.
  std::vector<std::pair<double, double>> spans;
  for (const Seg& s : segs) spans.emplace_back(s.t_in, s.t_out);
  std::sort(spans.begin(), spans.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& sp : spans) {
    if (!merged.empty() && sp.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, sp.second);
    } else {
      merged.push_back(sp);
    }
  }
  double total = 0.0;
  for (const auto& m : merged) total += m.second - m.first;
  if (!(total > 0.0)) return background;

  std::vector<Rgb> colors(segs.size());
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const NeuralPrimitive& p = scene.primitives[segs[k].index];
    SHCoefficients sh = p.sh;
    if (p.temporal_sh) sh.coeffs[0] = temporal_sh0(sh.coeffs[0], *p.temporal_sh, time);
    colors[k] = sh_eval(sh, r.direction);
  }

  // Samples per span in proportion to its length (largest remainder), so
  // no stratum straddles a gap between spans.
  std::vector<int> counts(merged.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < merged.size(); ++k) {
    const double share = n_samples * (merged[k].second - merged[k].first) / total;
    counts[k] = int(std::floor(share));
    assigned += counts[k];
    remainders.emplace_back(share - counts[k], k);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (std::size_t i = 0; assigned < n_samples && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second];

  Rgb c = Rgb::Zero();
  double transmittance = 1.0;
  for (std::size_t k = 0; k < merged.size(); ++k) {
    if (counts[k] == 0) continue;
    const double dt = (merged[k].second - merged[k].first) / counts[k];
    for (int i = 0; i < counts[k]; ++i) {
      const double t = merged[k].first + (i + 0.5) * dt;
      const Vec3 x = r.origin + t * r.direction;
      double sigma = 0.0;
      Rgb weighted = Rgb::Zero();
      for (std::size_t j = 0; j < segs.size(); ++j) {
        if (t < segs[j].t_in || t > segs[j].t_out) continue;
        const double d = network_value(scene.primitives[segs[j].index], x, time);
        sigma += d;
        weighted += d * colors[j];
      }
      if (sigma == 0.0) continue;
      const double alpha = -std::expm1(-sigma * dt);
      c += transmittance * alpha * (weighted / sigma);
      transmittance *= 1.0 - alpha;
    }
  }
  return c + transmittance * background;
}

Image raymarch_render(const Scene& scene, const Camera& cam, const RenderConfig& cfg, int n_samples) {
  cfg.validate();
  cam.validate();
  if (n_samples < 2) throw std::invalid_argument("raymarch_render: n_samples must be >= 2");
  const Rgb bg = cfg.background.value_or(scene.background);
  Image img(cam.width, cam.height);
  parallel_for(std::size_t(cam.height), resolve_threads(cfg.threads), [&](std::size_t row, int) {
    const int y = int(row);
    for (int x = 0; x < cam.width; ++x) {
      Rgb c = raymarch_ray(scene, pixel_ray(cam, x, y, cfg.t_near, cfg.t_far), n_samples, bg, cam.time);
      if (cfg.clamp_output) c = c.cwiseMax(0.0).cwiseMin(1.0);
      img.set(x, y, c);
    }
  });
  return img;
}

// ---------------------------------------------------------------------------
// Analytic shapes

AnalyticDensity AnalyticDensity::sphere(double radius) {
  AnalyticDensity a;
  a.shape = Shape::kSphere;
  a.size = Vec3(radius, radius, radius);
  return a;
}

AnalyticDensity AnalyticDensity::box(const Vec3& half_extents) {
  AnalyticDensity a;
  a.shape = Shape::kBox;
  a.size = half_extents;
  return a;
}

AnalyticDensity AnalyticDensity::torus(double major, double minor) {
  AnalyticDensity a;
  a.shape = Shape::kTorus;
  a.size = Vec3(major, minor, minor);
  return a;
}

AnalyticDensity AnalyticDensity::join(std::vector<AnalyticDensity> parts) {
  if (parts.empty()) throw std::invalid_argument("AnalyticDensity::join: no parts");
  AnalyticDensity a;
  a.shape = Shape::kUnion;
  a.children = std::move(parts);
  return a;
}

std::vector<std::string> AnalyticDensity::tags() { return {"sphere", "box", "torus", "union"}; }

AnalyticDensity AnalyticDensity::from_tag(const std::string& tag) {
  if (tag == "sphere") return sphere(1.0);
  if (tag == "box") {
    AnalyticDensity b = box(Vec3(0.8, 0.6, 0.5));
    b.rotation = Vec4(0.9238795325112867, 0.0, 0.0, 0.3826834323650898);  // 45 degrees about z
    return b;
  }
  if (tag == "torus") {
    AnalyticDensity t = torus(0.8, 0.3);
    t.rotation = Vec4(0.9659258262890683, 0.25881904510252074, 0.0, 0.0);  // 30 degrees about x
    return t;
  }
  if (tag == "union") {
    AnalyticDensity s = sphere(0.6);
    s.center = Vec3(-0.4, 0.0, 0.2);
    AnalyticDensity b = box(Vec3(0.5, 0.5, 0.3));
    b.center = Vec3(0.4, 0.1, -0.1);
    return join({s, b});
  }
  std::string valid;
  for (const auto& t : tags()) valid += (valid.empty() ? "" : ", ") + t;
  throw std::invalid_argument("unknown shape '" + tag + "' (valid: " + valid + ")");
}

double AnalyticDensity::signed_distance(const Vec3& x) const {
  const Vec3 q = quat_to_rotation_matrix(rotation).transpose() * (x - center);
  switch (shape) {
    case Shape::kSphere:
      return q.norm() - size.x();
    case Shape::kBox: {
      const Vec3 d = q.cwiseAbs() - size;
      return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
    }
    case Shape::kTorus: {
      const double ring = std::hypot(q.x(), q.y()) - size.x();
      return std::hypot(ring, q.z()) - size.y();
    }
    case Shape::kUnion: {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : children) d = std::min(d, c.signed_distance(x));
      return d;
    }
  }
  return 0.0;
}

double AnalyticDensity::density(const Vec3& x) const {
  if (shape == Shape::kUnion) {
    double d = 0.0;
    for (const auto& c : children) d = std::max(d, c.density(x));
    return d;
  }
  const double sd = signed_distance(x);
  return value * std::clamp(0.5 - sd / edge, 0.0, 1.0);
}

double AnalyticDensity::bounding_radius() const {
  switch (shape) {
    case Shape::kSphere:
      return center.norm() + size.x() + edge;
    case Shape::kBox:
      return center.norm() + size.norm() + edge;
    case Shape::kTorus:
      return center.norm() + size.x() + size.y() + edge;
    case Shape::kUnion: {
      double r = 0.0;
      for (const auto& c : children) r = std::max(r, c.bounding_radius());
      return r;
    }
  }
  return 0.0;
}

namespace {

Rgb march_analytic(const AnalyticDensity& shape, const Ray& r, double radius, double dt, const ToyOptions& opts) {
  // Overlap with the bounding sphere about the origin.
  const double b = r.origin.dot(r.direction);
  const double c = r.origin.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return opts.background;
  const double sq = std::sqrt(disc);
  const double t0 = std::max(r.t_near, -b - sq), t1 = std::min(r.t_far, -b + sq);
  if (!(t1 > t0)) return opts.background;
  const int n = std::max(1, int(std::ceil((t1 - t0) / dt)));
  const double step = (t1 - t0) / n;
  double optical = 0.0;
  for (int i = 0; i < n; ++i) optical += shape.density(r.origin + (t0 + (i + 0.5) * step) * r.direction) * step;
  const double opacity = -std::expm1(-optical);
  return opacity * opts.albedo + (1.0 - opacity) * opts.background;
}

}  // namespace

ToyDataset gen_toy_dataset(const AnalyticDensity& shape, int n_views, int resolution, std::uint64_t seed,
                           const ToyOptions& opts) {
  if (n_views < 2) throw std::invalid_argument("gen_toy_dataset: n_views must be >= 2");
  if (resolution < 1) throw std::invalid_argument("gen_toy_dataset: resolution must be >= 1");
  const double radius = shape.bounding_radius();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double f = 0.5 * resolution / std::tan(0.5 * opts.fov_degrees * std::numbers::pi / 180.0);
  const double dt = radius / opts.steps_per_radius;

  ToyDataset out;
  Dataset& d = out.data;
  d.background = opts.background;
  for (int i = 0; i < n_views; ++i) {
    const double z = (i + 0.5) / n_views;
    const double rho = std::sqrt(1.0 - z * z);
    const double phi = phase + golden * i;
    const Vec3 eye = 3.0 * radius * Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
    Camera cam = look_at(eye, Vec3::Zero(), Vec3::UnitZ(), f, f, resolution, resolution);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03d.png", i);
    cam.name = name;

    Image img(resolution, resolution);
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        img.set(x, y, march_analytic(shape, pixel_ray(cam, x, y, 0.0, 1e4), radius, dt, opts));
      }
    }
    (i % 4 == 3 ? d.test : d.train).push_back(d.cameras.size());
    d.cameras.push_back(std::move(cam));
    d.images.push_back(std::move(img));
  }
  d.extent = camera_extent(d.cameras);

  // Interior samples by rejection from the bounding cube.
  std::uniform_real_distribution<double> cube(-radius, radius);
  const double thresh = 0.5 * (shape.shape == AnalyticDensity::Shape::kUnion ? shape.children[0].value : shape.value);
  std::size_t attempts = 0;
  while (out.points.size() < opts.n_points && attempts < 1000 * opts.n_points) {
    ++attempts;
    const Vec3 x(cube(rng), cube(rng), cube(rng));
    if (shape.density(x) >= thresh) out.points.push_back(x);
  }
  return out;
}

}  // namespace nspl
