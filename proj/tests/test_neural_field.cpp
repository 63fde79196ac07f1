#include <cmath>
#include <vector>

#include "doctest.h"
#include "nspl/neural_field.hpp"
#include "nspl/oracle.hpp"
#include "support.hpp"

using namespace nspl;
using nspl::test::Gen;

namespace {

// Term-by-term evaluation written independently of the library.
double hand_network(const NeuralPrimitive& p, const Vec3& x, double xi = 0.0) {
  const double m = std::max({std::abs(p.geometry.scale.x()), std::abs(p.geometry.scale.y()),
                             std::abs(p.geometry.scale.z())});
  const double xh[3] = {(x.x() - p.geometry.center.x()) / m, (x.y() - p.geometry.center.y()) / m,
                        (x.z() - p.geometry.center.z()) / m};
  double f = p.net.b2;
  for (int k = 0; k < p.net.width(); ++k) {
    double inner = p.net.b1[k];
    for (int j = 0; j < 3; ++j) inner += p.net.w1[k][j] * xh[j];
    double phase = p.net.omega * inner;
    if (p.net.temporal()) phase += xi * p.net.wt[k];
    f += p.net.w2[k] * std::cos(phase);
  }
  return f;
}

NeuralPrimitive constant_sphere(double value) {
  NeuralPrimitive p = NeuralPrimitive::zeros({});
  p.net.b2 = value;
  return p;
}

}  // namespace

TEST_CASE("default record layout holds 99 scalars") {
  const ParamLayout l;
  CHECK(l.size == 99);
  CHECK(l.mlp_size() == 41);
  CHECK(l.sh_count == 16);
  CHECK(l.w1 == 10);  // 3 center + 3 scale + 4 rotation

  PrimitiveConfig t;
  t.temporal = true;
  const ParamLayout lt(t);
  CHECK(lt.size == 99 + 8 + 3 * (4 + 4 + 4));
}

TEST_CASE("pack and unpack are inverse") {
  Gen g(10);
  for (bool temporal : {false, true}) {
    PrimitiveConfig cfg;
    cfg.temporal = temporal;
    const ParamLayout l(cfg);
    const NeuralPrimitive p = g.primitive(cfg);
    std::vector<double> rec(l.size);
    pack(p, l, rec);
    const NeuralPrimitive q = unpack(cfg, l, rec);
    std::vector<double> again(l.size);
    pack(q, l, again);
    CHECK(rec == again);
  }
}

TEST_CASE("primitive config validation") {
  PrimitiveConfig c;
  c.hidden = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.omega = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.sh_degree = 4;
  CHECK_THROWS(c.validate());
}

TEST_CASE("normalize_input") {
  NeuralPrimitive p = NeuralPrimitive::zeros({});
  p.geometry.center = Vec3(1, 2, 3);
  p.geometry.scale = Vec3(2, 1, 0.5);
  CHECK(normalize_input(p, p.geometry.center).norm() == 0.0);
  CHECK((normalize_input(p, p.geometry.center + Vec3(2, 0, 0)) - Vec3(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("density evaluation") {
  CHECK(density(constant_sphere(5.0), Vec3(0.3, -0.2, 0.1)) == 5.0);
  CHECK(density(constant_sphere(5.0), Vec3(2, 0, 0)) == 0.0);

  PrimitiveConfig one;
  one.hidden = 1;
  NeuralPrimitive p = NeuralPrimitive::zeros(one);
  p.net.w1[0] = Vec3(1, 0, 0);
  p.net.w2[0] = 1.0;
  CHECK(density(p, Vec3(0, 0.4, 0.2)) == doctest::Approx(1.0).epsilon(1e-15));

  Gen g(11);
  for (int i = 0; i < 500; ++i) {
    const NeuralPrimitive q = g.primitive();
    const Vec3 x = q.geometry.center + q.geometry.rotation_matrix() * (0.5 * g.unit()).cwiseProduct(q.geometry.scale);
    CHECK(std::abs(density(q, x) - hand_network(q, x)) < 1e-12);
  }
}

TEST_CASE("temporal density") {
  Gen g(12);
  PrimitiveConfig cfg;
  cfg.temporal = true;
  for (int i = 0; i < 100; ++i) {
    NeuralPrimitive p = g.primitive(cfg);
    const Vec3 x = p.geometry.center;
    CHECK(temporal_density(p, x, 0.0) == doctest::Approx(hand_network(p, x, 0.0)).epsilon(1e-12));
    const double xi = g.uniform(-1, 1);
    CHECK(std::abs(temporal_density(p, x, xi) - hand_network(p, x, xi)) < 1e-12);
    std::fill(p.net.wt.begin(), p.net.wt.end(), 0.0);
    CHECK(temporal_density(p, x, xi) == density(p, x));
  }
  CHECK_THROWS(temporal_density(g.primitive(), Vec3::Zero(), 0.5));
}

TEST_CASE("line integral examples") {
  const NeuralPrimitive c = constant_sphere(2.5);
  const Ray r = Ray::make(Vec3(-2, 0, 0), Vec3::UnitX(), 0.0, 100.0);
  CHECK(line_integral(c, r, 1.0, 3.0) == doctest::Approx(5.0).epsilon(1e-15));

  // h = 0: W1 orthogonal to the ray direction.
  PrimitiveConfig one;
  one.hidden = 1;
  NeuralPrimitive p = NeuralPrimitive::zeros(one);
  p.net.w1[0] = Vec3(0, 0, 1);
  p.net.b1[0] = 0.1;
  p.net.w2[0] = 0.7;
  p.net.b2 = 0.2;
  const double expected = 2.0 * (0.7 * std::cos(30.0 * 0.1) + 0.2);
  CHECK(line_integral(p, r, 1.0, 3.0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("line integral matches quadrature") {
  Gen g(13);
  for (int i = 0; i < 500; ++i) {
    const NeuralPrimitive p = g.primitive({}, 0.1, 10.0);
    const Ray r = g.ray_through(p);
    const auto hit = intersect(p.geometry, r);
    REQUIRE(hit);
    const double closed = line_integral(p, r, hit->t_in, hit->t_out);
    const double quad = quad_integral(p, r, hit->t_in, hit->t_out);
    CHECK(std::abs(closed - quad) <= 1e-6 * (1.0 + std::abs(quad)));
  }
}

TEST_CASE("sinc is smooth through zero") {
  CHECK(sinc(0.0) == 1.0);
  CHECK(sinc_derivative(0.0) == 0.0);
  for (double u : {1e-8, 1e-5, 1e-3, 0.05, 0.2, 1.0, 5.0}) {
    CHECK(sinc(u) == doctest::Approx(std::sin(u) / u).epsilon(1e-12));
    const double h = 1e-6 * std::max(1.0, u);
    CHECK(std::abs(sinc_derivative(u) - (sinc(u + h) - sinc(u - h)) / (2 * h)) < 1e-8);
  }
}

TEST_CASE("kernel opacity") {
  const Ray r = Ray::make(Vec3(-2, 0, 0), Vec3::UnitX(), 0.0, 100.0);
  CHECK(kernel(constant_sphere(1.0), Ray::make(Vec3(-2, 3, 0), Vec3::UnitX(), 0.0, 100.0)) == 0.0);
  CHECK(kernel(constant_sphere(std::log(2.0) / 2.0), r) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(kernel(constant_sphere(-1.0), r) == 0.0);

  Gen g(14);
  for (int i = 0; i < 1000; ++i) {
    const NeuralPrimitive p = g.primitive();
    const double k = kernel(p, g.ray_through(p));
    CHECK(k >= 0.0);
    CHECK(k < 1.0);
  }
}

TEST_CASE("kernel backward") {
  const NeuralPrimitive c = constant_sphere(1.0);
  const Ray r = Ray::make(Vec3(-2, 0.1, 0), Vec3::UnitX(), 0.0, 100.0);
  NetGradient zero = NetGradient::zeros(8, false);
  kernel_backward(c, r, 0.0, zero);
  CHECK(zero.d_b2 == 0.0);
  CHECK(zero.d_center.norm() == 0.0);

  Gen g(15);
  std::size_t compared = 0, good = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const NeuralPrimitive p = g.primitive();
    const Ray ray = g.ray_through(p);
    const auto hit = intersect(p.geometry, ray);
    if (!hit || hit->entry_clipped || line_integral(p, ray, hit->t_in, hit->t_out) < 1e-3) continue;
    NetGradient grad = NetGradient::zeros(p.net.width(), false);
    kernel_backward(p, ray, 1.0, grad);

    const ParamLayout l;
    std::vector<double> rec(l.size);
    pack(p, l, rec);
    auto k_of = [&](int off, double v) {
      std::vector<double> mod = rec;
      mod[off] = v;
      return kernel(unpack({}, l, mod), ray);
    };
    auto check = [&](int off, double analytic) {
      const double fd = central_difference([&](double v) { return k_of(off, v); }, rec[off], 1e-4);
      ++compared;
      if (std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(fd), 1e-4)) ++good;
    };
    for (int j = 0; j < 3; ++j) check(l.center + j, grad.d_center[j]);
    for (int j = 0; j < 3; ++j) check(l.scale + j, grad.d_scale[j]);
    for (int j = 0; j < 4; ++j) check(l.rotation + j, grad.d_rotation[j]);
    for (int k = 0; k < 8; ++k) {
      for (int j = 0; j < 3; ++j) check(l.w1 + 3 * k + j, grad.d_w1[k][j]);
      check(l.b1 + k, grad.d_b1[k]);
      check(l.w2 + k, grad.d_w2[k]);
    }
    check(l.b2, grad.d_b2);
  }
  REQUIRE(compared > 1000);
  CHECK(double(good) / double(compared) >= 0.95);
}

TEST_CASE("stable form agrees with difference form") {
  Gen g(16);
  int compared = 0;
  for (int i = 0; i < 2000; ++i) {
    PrimitiveConfig one;
    one.hidden = 1;
    NeuralPrimitive p = g.primitive(one, 0.1, 10.0);
    const Ray r = g.ray_through(p);
    const auto hit = intersect(p.geometry, r);
    REQUIRE(hit);
    const double h = p.net.omega * p.net.w1[0].dot(r.direction) / p.geometry.max_scale();
    if (std::abs(h * hit->length()) <= 1e-3) continue;
    ++compared;
    CHECK(std::abs(line_integral(p, r, hit->t_in, hit->t_out) -
                   line_integral_difference_form(p, r, hit->t_in, hit->t_out)) < 1e-7);
  }
  CHECK(compared > 1000);

  // Product form stays finite and continuous as h -> 0.
  PrimitiveConfig one;
  one.hidden = 1;
  NeuralPrimitive p = NeuralPrimitive::zeros(one);
  p.net.w2[0] = 1.0;
  const Ray r = Ray::make(Vec3(-2, 0, 0), Vec3::UnitX(), 0.0, 100.0);
  double prev = 0.0;
  for (int e = 0; e <= 16; ++e) {
    p.net.w1[0] = Vec3(std::pow(10.0, -e), 0.0, 0.0);
    const double v = line_integral(p, r, 1.0, 3.0);
    CHECK(std::isfinite(v));
    if (e > 8) CHECK(std::abs(v - prev) < 1e-9);
    prev = v;
  }
  CHECK(prev == doctest::Approx(2.0).epsilon(1e-12));
}
