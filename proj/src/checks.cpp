#include "nspl/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "nspl/oracle.hpp"
#include "nspl/training.hpp"

namespace nspl {

void CheckReport::note_failure(const std::string& detail) {
  passed = false;
  ++failures;
  if (failure_details.size() < 5) failure_details.push_back(detail);
}

std::uint64_t case_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the pair.
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_vec(const Vec3& v) {
  std::ostringstream s;
  s.precision(17);
  s << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
  return s.str();
}

Vec4 random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec4 q(n(rng), n(rng), n(rng), n(rng));
    if (q.norm() > 1e-6) return q.normalized();
  }
}

Vec3 random_in_ball(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 v(u(rng), u(rng), u(rng));
    if (v.squaredNorm() <= 1.0) return v;
  }
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-9) return v.normalized();
  }
}

std::string describe(const IntegralCase& c, std::uint64_t seed, std::uint64_t index) {
  std::ostringstream s;
  s.precision(17);
  s << "seed " << seed << " case " << index << ": center " << fmt_vec(c.prim.geometry.center) << " scale "
    << fmt_vec(c.prim.geometry.scale) << " origin " << fmt_vec(c.ray.origin) << " dir " << fmt_vec(c.ray.direction)
    << " t [" << c.hit.t_in << ", " << c.hit.t_out << "]";
  if (c.prim.net.temporal()) s << " xi " << c.xi;
  return s.str();
}

}  // namespace

IntegralCase make_integral_case(const IntegralCheckOptions& opts, std::uint64_t index) {
  std::mt19937_64 rng(case_seed(opts.seed, index));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_lo = std::log(opts.min_scale), log_hi = std::log(opts.max_scale);

  PrimitiveConfig cfg;
  cfg.hidden = opts.hidden;
  cfg.omega = opts.omega;
  cfg.temporal = opts.temporal;
  IntegralCase c;
  c.prim = NeuralPrimitive::zeros(cfg);
  auto& g = c.prim.geometry;
  g.center = 3.0 * Vec3(u(rng), u(rng), u(rng));
  for (int k = 0; k < 3; ++k) g.scale[k] = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
  g.rotation = random_quaternion(rng);
  auto& net = c.prim.net;
  for (int k = 0; k < cfg.hidden; ++k) {
    net.w1[k] = Vec3(u(rng), u(rng), u(rng));
    net.b1[k] = u(rng);
    net.w2[k] = 0.5 * u(rng);
    if (cfg.temporal) net.wt[k] = 3.0 * u(rng);
  }
  net.b2 = 0.75 * u(rng) + 0.25;
  if (cfg.temporal) c.xi = u(rng);

  const Mat3 R = g.rotation_matrix();
  for (;;) {
    const Vec3 target = g.center + R * g.scale.cwiseProduct(0.95 * random_in_ball(rng));
    const Vec3 dir = random_unit(rng);
    const bool inside = unit(rng) < 0.2;
    const double back = inside ? 0.0 : (0.5 + 2.5 * unit(rng)) * g.max_scale();
    c.ray = Ray::make(target - back * dir, dir, 0.0, 1e4);
    if (auto h = intersect(g, c.ray)) {
      c.hit = *h;
      return c;
    }
  }
}

CheckReport check_integrals(const IntegralCheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckReport rep;
  rep.name = opts.temporal ? "integrals-temporal" : "integrals";
  const QuadratureConfig qc;
  for (std::size_t i = 0; i < opts.cases; ++i) {
    const IntegralCase c = make_integral_case(opts, i);
    ++rep.cases;
    double quad = 0.0;
    try {
      quad = quad_integral(c.prim, c.ray, c.hit.t_in, c.hit.t_out, qc, c.xi);
    } catch (const QuadratureError& e) {
      rep.note_failure(describe(c, opts.seed, i) + ": quadrature failed: " + e.what());
      continue;
    }
    const double closed = line_integral(c.prim, c.ray, c.hit.t_in, c.hit.t_out, c.xi);
    const double err = std::abs(closed - quad) / (1.0 + std::abs(quad));
    if (err > rep.worst_error || !std::isfinite(err)) {
      rep.worst_error = err;
      rep.worst_case = describe(c, opts.seed, i);
    }
    if (!(err <= opts.tolerance)) {
      std::ostringstream s;
      s.precision(17);
      s << describe(c, opts.seed, i) << ": closed " << closed << " quad " << quad << " scaled error " << err;
      rep.note_failure(s.str());
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

CheckReport check_integral_properties(const PropertyCheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckReport rep;
  rep.name = "integral-properties";
  IntegralCheckOptions gen;
  gen.seed = opts.seed;
  std::size_t form_cases = 0;
  double worst_add = 0.0, worst_shift = 0.0, worst_form = 0.0;
  for (std::size_t i = 0; i < opts.cases; ++i) {
    const IntegralCase c = make_integral_case(gen, i);
    std::mt19937_64 rng(case_seed(opts.seed ^ 0xabcdefULL, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ++rep.cases;
    const double a = c.hit.t_in, b = c.hit.t_out;
    const double whole = line_integral(c.prim, c.ray, a, b);
    const double scale = std::max(1.0, std::abs(whole));

    const double m = a + (b - a) * unit(rng);
    const double add_err = std::abs(line_integral(c.prim, c.ray, a, m) + line_integral(c.prim, c.ray, m, b) - whole);
    worst_add = std::max(worst_add, add_err / scale);

    const double s = 10.0 * (unit(rng) - 0.5);
    Ray shifted = c.ray;
    shifted.origin += s * c.ray.direction;
    const double shift_err = std::abs(line_integral(c.prim, shifted, a - s, b - s) - whole);
    worst_shift = std::max(worst_shift, shift_err / scale);

    const double inv_m = 1.0 / c.prim.geometry.max_scale();
    bool spans = true;
    for (int k = 0; k < c.prim.net.width(); ++k) {
      const double h = c.prim.net.omega * c.prim.net.w1[k].dot(c.ray.direction) * inv_m;
      if (!(std::abs(h * (b - a)) > opts.min_phase_span)) spans = false;
    }
    double form_err = 0.0;
    if (spans) {
      ++form_cases;
      form_err = std::abs(line_integral_difference_form(c.prim, c.ray, a, b) - whole) / scale;
      worst_form = std::max(worst_form, form_err);
    }

    const double worst_here = std::max({add_err / scale / opts.identity_tolerance,
                                        shift_err / scale / opts.identity_tolerance, form_err / opts.form_tolerance});
    if (worst_here > rep.worst_error) {
      rep.worst_error = worst_here;
      rep.worst_case = describe(c, opts.seed, i);
    }
    if (!(add_err <= opts.identity_tolerance * scale) || !(shift_err <= opts.identity_tolerance * scale) ||
        !(form_err <= opts.form_tolerance)) {
      std::ostringstream d;
      d.precision(17);
      d << describe(c, opts.seed, i) << ": additivity " << add_err << " shift " << shift_err << " form " << form_err;
      rep.note_failure(d.str());
    }
  }
  // worst_error is reported in units of the respective tolerance here.
  rep.extras = {{"worst_additivity", worst_add},
                {"worst_origin_shift", worst_shift},
                {"worst_form_difference", worst_form},
                {"form_cases", double(form_cases)}};
  rep.seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

Camera forward_camera(int resolution) {
  Camera cam;
  cam.name = "oracle";
  cam.width = cam.height = resolution;
  cam.fx = cam.fy = resolution;
  cam.cx = cam.cy = 0.5 * resolution;
  return cam;
}

Scene gradient_scene(const GradientCheckOptions& opts) {
  std::mt19937_64 rng(case_seed(opts.seed, 0x67726164));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene s;
  s.background = Rgb(0.2, 0.3, 0.4);
  s.extent = 5.0;
  for (int i = 0; i < opts.primitives; ++i) {
    NeuralPrimitive p = NeuralPrimitive::zeros(s.config);
    p.geometry.center = Vec3(0.9 * u(rng), 0.9 * u(rng), 5.0 + u(rng));
    for (int k = 0; k < 3; ++k) p.geometry.scale[k] = 0.6 + 0.6 * unit(rng);
    p.geometry.rotation = random_quaternion(rng);
    for (int k = 0; k < p.net.width(); ++k) {
      p.net.w1[k] = Vec3(u(rng), u(rng), u(rng)) / 3.0;
      p.net.b1[k] = 0.5 * u(rng);
      p.net.w2[k] = 0.1 * u(rng);
    }
    p.net.b2 = 0.6 + 0.2 * u(rng);
    for (auto& c : p.sh.coeffs) c = 0.2 * Rgb(u(rng), u(rng), u(rng));
    s.primitives.push_back(std::move(p));
  }
  return s;
}

// Discrete structure of a render: hit order, integral signs, SH clamp
// states and L1 signs. Finite differences are only meaningful when it is
// the same on both sides of the probe.
std::vector<std::int64_t> render_signature(const Scene& scene, const Camera& cam, const RenderConfig& rc,
                                           const Image& rendered, const Image& target) {
  std::vector<std::int64_t> sig;
  std::vector<PreparedPrimitive> prepared;
  for (const auto& p : scene.primitives) prepared.emplace_back(p);
  std::array<double, kMaxShCoeffs> basis{};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray r = pixel_ray(cam, x, y, rc.t_near, rc.t_far);
      const auto hits = gather_hits(scene, r, rc);
      sh_basis(scene.config.sh_degree, r.direction, basis);
      sig.push_back(-1);
      for (const RayHit& h : hits) {
        sig.push_back(h.index);
        sig.push_back(segment_integral(prepared[h.index], r, h.segment, cam.time) > 0.0);
        const auto& sh = scene.primitives[h.index].sh;
        Rgb raw = Rgb::Constant(0.5);
        for (int i = 0; i < sh.count(); ++i) raw += basis[i] * sh.coeffs[i];
        for (int ch = 0; ch < 3; ++ch) sig.push_back(raw[ch] > 0.0);
      }
      for (int ch = 0; ch < 3; ++ch) sig.push_back(rendered.px(x, y)[ch] > target.px(x, y)[ch]);
    }
  }
  return sig;
}

}  // namespace

CheckReport check_gradients(const GradientCheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckReport rep;
  rep.name = "gradients";
  const Scene scene = gradient_scene(opts);
  const Camera cam = forward_camera(opts.resolution);
  RenderConfig rc;
  rc.clamp_output = false;
  rc.keep_hits = true;
  const TrainConfig tc;

  std::mt19937_64 rng(case_seed(opts.seed, 0x74617267));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image target(cam.width, cam.height);
  for (double& v : target.data) v = unit(rng);

  const RenderOutput fwd = render(scene, cam, rc);
  const LossResult lr = loss(fwd.color, target, scene, tc);
  GradientBuffer grads = render_backward(scene, cam, rc, lr.pixel_grad, &fwd);
  const ParamLayout l = scene.layout();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (int k = 0; k < 3; ++k) grads.record(i)[l.scale + k] += lr.scale_grad[i][k];
  }

  RenderConfig plain = rc;
  plain.keep_hits = false;
  std::size_t tight = 0, loose = 0, excluded = 0, compared = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (int off = 0; off < l.size; ++off) {
      const ParamSelector sel{i, off};
      const double x = get_param(scene, sel);
      const double h = opts.step * std::max(1.0, std::abs(x));
      Scene plus = scene, minus = scene;
      set_param(plus, sel, x + h);
      set_param(minus, sel, x - h);
      const Image rp = render(plus, cam, plain).color, rm = render(minus, cam, plain).color;
      if (render_signature(plus, cam, plain, rp, target) != render_signature(minus, cam, plain, rm, target)) {
        ++excluded;
        continue;
      }
      const double fd = (loss(rp, target, plus, tc).total - loss(rm, target, minus, tc).total) / (2.0 * h);
      const double an = grads.record(i)[off];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), opts.abs_floor});
      ++compared;
      ++rep.cases;
      if (err <= opts.tolerance) ++tight;
      if (err <= opts.loose_tolerance) ++loose;
      if (err > rep.worst_error) {
        std::ostringstream s;
        s.precision(17);
        s << "seed " << opts.seed << " primitive " << i << " offset " << off << ": analytic " << an << " fd " << fd;
        rep.worst_error = err;
        rep.worst_case = s.str();
      }
      if (err > opts.loose_tolerance) {
        std::ostringstream s;
        s.precision(17);
        s << "seed " << opts.seed << " primitive " << i << " offset " << off << ": analytic " << an << " fd " << fd
          << " rel " << err;
        rep.note_failure(s.str());
      }
    }
  }
  const double frac = compared ? double(tight) / double(compared) : 0.0;
  if (compared == 0 || frac < opts.required_fraction) rep.passed = false;
  rep.extras = {{"compared", double(compared)},
                {"excluded_straddling", double(excluded)},
                {"fraction_within_tolerance", frac},
                {"fraction_within_loose", compared ? double(loose) / double(compared) : 0.0}};
  rep.seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Render oracle

Camera oracle_camera(int resolution) { return forward_camera(resolution); }

Scene make_disjoint_scene(int primitives, std::uint64_t seed) {
  std::mt19937_64 rng(case_seed(seed, 0x646973));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene s;
  s.background = Rgb(0.1, 0.15, 0.2);
  s.extent = 8.0;
  int attempts = 0;
  while (int(s.size()) < primitives) {
    if (++attempts > 100000) throw std::runtime_error("make_disjoint_scene: could not place primitives");
    NeuralPrimitive p = NeuralPrimitive::zeros(s.config);
    p.geometry.center = Vec3(2.5 * u(rng), 2.5 * u(rng), 8.0 + 4.0 * u(rng));
    for (int k = 0; k < 3; ++k) p.geometry.scale[k] = 0.25 + 0.35 * unit(rng);
    const double radius = p.geometry.max_scale();
    bool clear = true;
    for (const auto& q : s.primitives) {
      if ((q.geometry.center - p.geometry.center).norm() < radius + q.geometry.max_scale() + 0.05) clear = false;
    }
    if (!clear) continue;
    p.geometry.rotation = random_quaternion(rng);
    for (int k = 0; k < p.net.width(); ++k) {
      p.net.w1[k] = Vec3(u(rng), u(rng), u(rng)) / 3.0;
      p.net.b1[k] = u(rng);
      p.net.w2[k] = 0.1 * u(rng);
    }
    // b2 exceeds sum |w2|, so the density is positive everywhere.
    p.net.b2 = 1.0 + 1.5 * unit(rng);
    for (auto& c : p.sh.coeffs) c = 0.15 * Rgb(u(rng), u(rng), u(rng));
    s.primitives.push_back(std::move(p));
  }
  return s;
}

CheckReport check_render_oracle(const RenderOracleOptions& opts) {
  const auto t0 = Clock::now();
  CheckReport rep;
  rep.name = "render-oracle";
  const Scene scene = make_disjoint_scene(opts.primitives, opts.seed);
  const Camera cam = oracle_camera(opts.resolution);
  RenderConfig rc;
  rc.threads = opts.threads;
  const Image closed = render(scene, cam, rc).color;
  const Image marched = raymarch_render(scene, cam, rc, opts.samples);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      ++rep.cases;
      double err = 0.0;
      for (int ch = 0; ch < 3; ++ch) err = std::max(err, std::abs(closed.px(x, y)[ch] - marched.px(x, y)[ch]));
      if (err > rep.worst_error) {
        rep.worst_error = err;
        rep.worst_case = "seed " + std::to_string(opts.seed) + " pixel (" + std::to_string(x) + ", " +
                         std::to_string(y) + ")";
      }
      if (!(err <= opts.tolerance)) {
        std::ostringstream s;
        s.precision(17);
        s << "seed " << opts.seed << " pixel (" << x << ", " << y << "): |closed - marched| " << err;
        rep.note_failure(s.str());
      }
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Temporal mode

CheckReport check_temporal(const TemporalCheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckReport rep;
  rep.name = "temporal";

  // Overlapping primitives exercise compositing as well.
  GradientCheckOptions gopts;
  gopts.seed = opts.seed;
  gopts.primitives = 6;
  const Scene stat = gradient_scene(gopts);
  Scene dyn = stat;
  dyn.config.temporal = true;
  for (auto& p : dyn.primitives) {
    p.net.wt.assign(p.net.width(), 0.0);
    p.temporal_sh = TemporalSH::zeros(dyn.config.poly_order, dyn.config.fourier_order);
  }
  Camera cam = oracle_camera(opts.resolution);
  RenderConfig rc;
  for (double t : opts.times) {
    cam.time = t;
    ++rep.cases;
    const Image a = render(stat, cam, rc).color, b = render(dyn, cam, rc).color;
    const bool same = a.data.size() == b.data.size() &&
                      std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
    if (!same) rep.note_failure("seed " + std::to_string(opts.seed) + " time " + std::to_string(t) +
                                ": dynamic render with zero temporal weights differs from static");
  }

  IntegralCheckOptions io;
  io.seed = opts.seed;
  io.cases = opts.integral_cases;
  io.tolerance = opts.tolerance;
  io.temporal = true;
  const CheckReport ir = check_integrals(io);
  rep.cases += ir.cases;
  rep.worst_error = ir.worst_error;
  rep.worst_case = ir.worst_case;
  for (const auto& f : ir.failure_details) rep.note_failure(f);
  if (!ir.passed) rep.passed = false;
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace nspl
