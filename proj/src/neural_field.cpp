#include "nspl/neural_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nspl {

void PrimitiveConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("PrimitiveConfig: hidden width must be >= 1");
  if (!(omega > 0.0)) throw std::invalid_argument("PrimitiveConfig: omega must be positive");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw std::invalid_argument("PrimitiveConfig: sh_degree must be in [0, 3]");
  }
  if (poly_order < 0 || fourier_order < 0) {
    throw std::invalid_argument("PrimitiveConfig: temporal orders must be non-negative");
  }
}

DensityNet DensityNet::zeros(int hidden, double omega, bool temporal) {
  DensityNet n;
  n.omega = omega;
  n.w1.assign(hidden, Vec3::Zero());
  n.b1.assign(hidden, 0.0);
  n.w2.assign(hidden, 0.0);
  if (temporal) n.wt.assign(hidden, 0.0);
  return n;
}

NeuralPrimitive NeuralPrimitive::zeros(const PrimitiveConfig& cfg) {
  cfg.validate();
  NeuralPrimitive p;
  p.net = DensityNet::zeros(cfg.hidden, cfg.omega, cfg.temporal);
  p.sh = SHCoefficients::zeros(cfg.sh_degree);
  if (cfg.temporal) p.temporal_sh = TemporalSH::zeros(cfg.poly_order, cfg.fourier_order);
  return p;
}

PrimitiveConfig NeuralPrimitive::config() const {
  PrimitiveConfig c;
  c.hidden = net.width();
  c.omega = net.omega;
  c.sh_degree = sh.degree;
  c.temporal = net.temporal();
  if (temporal_sh) {
    c.poly_order = static_cast<int>(temporal_sh->poly.size());
    c.fourier_order = static_cast<int>(temporal_sh->four_cos.size());
  }
  return c;
}

ParamLayout::ParamLayout(const PrimitiveConfig& cfg)
    : hidden(cfg.hidden),
      sh_count(sh_coeff_count(cfg.sh_degree)),
      temporal(cfg.temporal),
      poly_order(cfg.temporal ? cfg.poly_order : 0),
      fourier_order(cfg.temporal ? cfg.fourier_order : 0) {
  b1 = w1 + 3 * hidden;
  w2 = b1 + hidden;
  b2 = w2 + hidden;
  sh = b2 + 1;
  size = sh + 3 * sh_count;
  if (temporal) {
    wt = size;
    poly = wt + hidden;
    four_cos = poly + 3 * poly_order;
    four_sin = four_cos + 3 * fourier_order;
    size = four_sin + 3 * fourier_order;
  }
}

void pack(const NeuralPrimitive& p, const ParamLayout& l, std::span<double> out) {
  const auto put3 = [&](int at, const Vec3& v) {
    out[at] = v.x();
    out[at + 1] = v.y();
    out[at + 2] = v.z();
  };
  put3(l.center, p.geometry.center);
  put3(l.scale, p.geometry.scale);
  for (int i = 0; i < 4; ++i) out[l.rotation + i] = p.geometry.rotation[i];
  for (int k = 0; k < l.hidden; ++k) {
    put3(l.w1 + 3 * k, p.net.w1[k]);
    out[l.b1 + k] = p.net.b1[k];
    out[l.w2 + k] = p.net.w2[k];
  }
  out[l.b2] = p.net.b2;
  for (int i = 0; i < l.sh_count; ++i) put3(l.sh + 3 * i, p.sh.coeffs[i]);
  if (l.temporal) {
    for (int k = 0; k < l.hidden; ++k) out[l.wt + k] = p.net.wt[k];
    for (int i = 0; i < l.poly_order; ++i) put3(l.poly + 3 * i, p.temporal_sh->poly[i]);
    for (int i = 0; i < l.fourier_order; ++i) {
      put3(l.four_cos + 3 * i, p.temporal_sh->four_cos[i]);
      put3(l.four_sin + 3 * i, p.temporal_sh->four_sin[i]);
    }
  }
}

NeuralPrimitive unpack(const PrimitiveConfig& cfg, const ParamLayout& l, std::span<const double> in) {
  const auto get3 = [&](int at) { return Vec3(in[at], in[at + 1], in[at + 2]); };
  NeuralPrimitive p = NeuralPrimitive::zeros(cfg);
  p.geometry.center = get3(l.center);
  p.geometry.scale = get3(l.scale);
  p.geometry.rotation = Vec4(in[l.rotation], in[l.rotation + 1], in[l.rotation + 2], in[l.rotation + 3]);
  for (int k = 0; k < l.hidden; ++k) {
    p.net.w1[k] = get3(l.w1 + 3 * k);
    p.net.b1[k] = in[l.b1 + k];
    p.net.w2[k] = in[l.w2 + k];
  }
  p.net.b2 = in[l.b2];
  for (int i = 0; i < l.sh_count; ++i) p.sh.coeffs[i] = get3(l.sh + 3 * i);
  if (l.temporal) {
    for (int k = 0; k < l.hidden; ++k) p.net.wt[k] = in[l.wt + k];
    for (int i = 0; i < l.poly_order; ++i) p.temporal_sh->poly[i] = get3(l.poly + 3 * i);
    for (int i = 0; i < l.fourier_order; ++i) {
      p.temporal_sh->four_cos[i] = get3(l.four_cos + 3 * i);
      p.temporal_sh->four_sin[i] = get3(l.four_sin + 3 * i);
    }
  }
  return p;
}

NetGradient NetGradient::zeros(int hidden, bool temporal) {
  NetGradient g;
  g.d_w1.assign(hidden, Vec3::Zero());
  g.d_b1.assign(hidden, 0.0);
  g.d_w2.assign(hidden, 0.0);
  if (temporal) g.d_wt.assign(hidden, 0.0);
  return g;
}

void NetGradient::reset() {
  std::fill(d_w1.begin(), d_w1.end(), Vec3::Zero());
  std::fill(d_b1.begin(), d_b1.end(), 0.0);
  std::fill(d_w2.begin(), d_w2.end(), 0.0);
  std::fill(d_wt.begin(), d_wt.end(), 0.0);
  d_b2 = 0.0;
  d_center.setZero();
  d_scale.setZero();
  d_rotation.setZero();
}

double sinc(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
  return std::sin(u) / u;
}

double sinc_derivative(double u) {
  if (std::abs(u) < 1e-2) {
    const double u2 = u * u;
    return u * (-1.0 / 3.0 + u2 * (1.0 / 30.0 - u2 / 840.0));
  }
  return (u * std::cos(u) - std::sin(u)) / (u * u);
}

Vec3 normalize_input(const NeuralPrimitive& p, const Vec3& x) {
  return (x - p.geometry.center) / p.geometry.max_scale();
}

namespace {

double net_phase_sum(const DensityNet& net, const Vec3& xhat, double xi) {
  double f = net.b2;
  const bool temporal = net.temporal();
  for (int k = 0; k < net.width(); ++k) {
    double phase = net.omega * (net.w1[k].dot(xhat) + net.b1[k]);
    if (temporal) phase += xi * net.wt[k];
    f += net.w2[k] * std::cos(phase);
  }
  return f;
}

struct NormalizedRay {
  Vec3 origin;
  Vec3 direction;
};

NormalizedRay normalized_ray(const Vec3& center, double inv_max_scale, const Ray& r) {
  return {(r.origin - center) * inv_max_scale, r.direction * inv_max_scale};
}

double closed_form_integral(const DensityNet& net, const NormalizedRay& nr, double t_in, double t_out,
                            double xi) {
  const double dt = t_out - t_in;
  const double tm = 0.5 * (t_in + t_out);
  const bool temporal = net.temporal();
  double sum = 0.0;
  for (int k = 0; k < net.width(); ++k) {
    double a = net.omega * (net.w1[k].dot(nr.origin) + net.b1[k]);
    if (temporal) a += xi * net.wt[k];
    const double h = net.omega * net.w1[k].dot(nr.direction);
    sum += net.w2[k] * std::cos(a + h * tm) * sinc(0.5 * h * dt);
  }
  return dt * (sum + net.b2);
}

}  // namespace

double density(const NeuralPrimitive& p, const Vec3& x) {
  if (implicit_value(p.geometry, x) > 1.0) return 0.0;
  return net_phase_sum(p.net, normalize_input(p, x), 0.0);
}

double network_value(const NeuralPrimitive& p, const Vec3& x, double xi) {
  return net_phase_sum(p.net, normalize_input(p, x), xi);
}

double temporal_density(const NeuralPrimitive& p, const Vec3& x, double xi) {
  if (!p.net.temporal()) throw std::logic_error("temporal_density: primitive has no temporal weights");
  if (implicit_value(p.geometry, x) > 1.0) return 0.0;
  return net_phase_sum(p.net, normalize_input(p, x), xi);
}

double line_integral(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out, double xi) {
  const auto nr = normalized_ray(p.geometry.center, 1.0 / p.geometry.max_scale(), r);
  return closed_form_integral(p.net, nr, t_in, t_out, xi);
}

double line_integral_difference_form(const NeuralPrimitive& p, const Ray& r, double t_in, double t_out,
                                     double xi) {
  const auto nr = normalized_ray(p.geometry.center, 1.0 / p.geometry.max_scale(), r);
  const auto& net = p.net;
  double sum = 0.0;
  for (int k = 0; k < net.width(); ++k) {
    double a = net.omega * (net.w1[k].dot(nr.origin) + net.b1[k]);
    if (net.temporal()) a += xi * net.wt[k];
    const double h = net.omega * net.w1[k].dot(nr.direction);
    sum += net.w2[k] * (std::sin(a + h * t_out) - std::sin(a + h * t_in)) / h;
  }
  return sum + net.b2 * (t_out - t_in);
}

PreparedPrimitive::PreparedPrimitive(const NeuralPrimitive& p) : prim(&p), frame(p.geometry) {
  const Vec3 s = p.geometry.scale.cwiseAbs();
  s.maxCoeff(&max_axis);
  inv_max_scale = 1.0 / s[max_axis];
  bounding_radius = s[max_axis];
}

double segment_integral(const PreparedPrimitive& pp, const Ray& r, const SegmentHit& hit, double xi) {
  const auto nr = normalized_ray(pp.frame.center, pp.inv_max_scale, r);
  return closed_form_integral(pp.prim->net, nr, hit.t_in, hit.t_out, xi);
}

std::optional<KernelSample> kernel_forward(const PreparedPrimitive& pp, const Ray& r, double xi) {
  const auto hit = intersect(pp.frame, r);
  if (!hit) return std::nullopt;
  KernelSample s;
  s.hit = *hit;
  s.integral = segment_integral(pp, r, *hit, xi);
  s.kappa = -std::expm1(-std::max(0.0, s.integral));
  return s;
}

double kernel(const NeuralPrimitive& p, const Ray& r, double xi) {
  const PreparedPrimitive pp(p);
  const auto s = kernel_forward(pp, r, xi);
  return s ? s->kappa : 0.0;
}

void integral_backward_into(const PreparedPrimitive& pp, const Ray& r, const SegmentHit& hit, double xi,
                            double upstream, const ParamLayout& l, std::span<double> g) {
  if (upstream == 0.0) return;
  const DensityNet& net = pp.prim->net;
  const auto nr = normalized_ray(pp.frame.center, pp.inv_max_scale, r);
  const double omega = net.omega;
  const double t0 = hit.t_in, t1 = hit.t_out;
  const double dt = t1 - t0;
  const double tm = 0.5 * (t0 + t1);
  const bool temporal = net.temporal();

  Vec3 d_ohat = Vec3::Zero();
  Vec3 d_dhat = Vec3::Zero();
  double density_in = net.b2;
  double density_out = net.b2;

  for (int k = 0; k < net.width(); ++k) {
    double a = omega * (net.w1[k].dot(nr.origin) + net.b1[k]);
    if (temporal) a += xi * net.wt[k];
    const double h = omega * net.w1[k].dot(nr.direction);
    const double u = 0.5 * h * dt;
    const double phi = a + h * tm;
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double sc = sinc(u);
    const double w2 = net.w2[k];

    const double g_a = -w2 * dt * sphi * sc;
    const double g_h = w2 * dt * (-tm * sphi * sc + cphi * sinc_derivative(u) * 0.5 * dt);

    g[l.w2 + k] += upstream * dt * cphi * sc;
    g[l.b1 + k] += upstream * omega * g_a;
    const Vec3 dw1 = omega * (g_a * nr.origin + g_h * nr.direction);
    g[l.w1 + 3 * k] += upstream * dw1.x();
    g[l.w1 + 3 * k + 1] += upstream * dw1.y();
    g[l.w1 + 3 * k + 2] += upstream * dw1.z();
    if (temporal) g[l.wt + k] += upstream * xi * g_a;

    d_ohat += (omega * g_a) * net.w1[k];
    d_dhat += (omega * g_h) * net.w1[k];
    density_in += w2 * std::cos(a + h * t0);
    density_out += w2 * std::cos(a + h * t1);
  }
  g[l.b2] += upstream * dt;

  // ohat = (o - c) / m, dhat = d / m with m = max_i scale_i.
  const double inv_m = pp.inv_max_scale;
  Vec3 d_center = -inv_m * d_ohat;
  Vec3 d_scale = Vec3::Zero();
  d_scale[pp.max_axis] = -inv_m * (d_ohat.dot(nr.origin) + d_dhat.dot(nr.direction));
  Mat3 d_rot = Mat3::Zero();

  // Endpoints move with the geometry: dI/dt_out = sigma(t_out), dI/dt_in = -sigma(t_in).
  if (!hit.entry_clipped) {
    const auto eg = surface_root_gradient(pp.frame, r, t0);
    d_center -= density_in * eg.d_center;
    d_scale -= density_in * eg.d_scale;
    d_rot -= density_in * eg.d_rotation;
  }
  if (!hit.exit_clipped) {
    const auto eg = surface_root_gradient(pp.frame, r, t1);
    d_center += density_out * eg.d_center;
    d_scale += density_out * eg.d_scale;
    d_rot += density_out * eg.d_rotation;
  }
  const Vec4 d_quat = quat_to_rotation_matrix_backward(pp.prim->geometry.rotation, d_rot);
  for (int i = 0; i < 3; ++i) {
    g[l.center + i] += upstream * d_center[i];
    g[l.scale + i] += upstream * d_scale[i];
  }
  for (int i = 0; i < 4; ++i) g[l.rotation + i] += upstream * d_quat[i];
}

void kernel_backward(const NeuralPrimitive& p, const Ray& r, double upstream, NetGradient& grad, double xi) {
  if (upstream == 0.0) return;
  const PreparedPrimitive pp(p);
  const auto s = kernel_forward(pp, r, xi);
  if (!s || !(s->integral > 0.0)) return;
  const double d_kappa_d_integral = std::exp(-s->integral);

  const PrimitiveConfig cfg = p.config();
  const ParamLayout l(cfg);
  std::vector<double> flat(l.size, 0.0);
  integral_backward_into(pp, r, s->hit, xi, upstream * d_kappa_d_integral, l, flat);

  const int n = p.net.width();
  if (static_cast<int>(grad.d_w1.size()) != n) grad = NetGradient::zeros(n, cfg.temporal);
  if (cfg.temporal && static_cast<int>(grad.d_wt.size()) != n) grad.d_wt.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    grad.d_w1[k] += Vec3(flat[l.w1 + 3 * k], flat[l.w1 + 3 * k + 1], flat[l.w1 + 3 * k + 2]);
    grad.d_b1[k] += flat[l.b1 + k];
    grad.d_w2[k] += flat[l.w2 + k];
    if (cfg.temporal) grad.d_wt[k] += flat[l.wt + k];
  }
  grad.d_b2 += flat[l.b2];
  grad.d_center += Vec3(flat[l.center], flat[l.center + 1], flat[l.center + 2]);
  grad.d_scale += Vec3(flat[l.scale], flat[l.scale + 1], flat[l.scale + 2]);
  grad.d_rotation += Vec4(flat[l.rotation], flat[l.rotation + 1], flat[l.rotation + 2], flat[l.rotation + 3]);
}

}  // namespace nspl
