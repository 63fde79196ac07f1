#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nspl/geometry.hpp"
#include "support.hpp"

using namespace nspl;
using nspl::test::Gen;

namespace {

Vec4 axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized() * std::sin(angle / 2);
  return {std::cos(angle / 2), a.x(), a.y(), a.z()};
}

// Roots of the implicit function found by scanning the sign along the ray and
// bisecting each crossing. Independent of the quadratic solver.
std::optional<std::pair<double, double>> bisection_overlap(const Ellipsoid& e, const Ray& r, int samples) {
  auto inside = [&](double t) { return implicit_value(e, r.origin + t * r.direction) < 1.0; };
  auto refine = [&](double lo, double hi) {
    const bool lo_in = inside(lo);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (inside(mid) == lo_in ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double dt = (r.t_far - r.t_near) / samples;
  std::optional<double> t_in, t_out;
  bool prev = inside(r.t_near);
  if (prev) t_in = r.t_near;
  for (int i = 1; i <= samples; ++i) {
    const double t = r.t_near + i * dt;
    const bool cur = inside(t);
    if (cur && !prev && !t_in) t_in = refine(t - dt, t);
    if (!cur && prev) t_out = refine(t - dt, t);
    prev = cur;
  }
  if (prev && t_in && !t_out) t_out = r.t_far;
  if (!t_in || !t_out) return std::nullopt;
  return std::make_pair(*t_in, *t_out);
}

}  // namespace

TEST_CASE("quaternion to rotation matrix") {
  CHECK(quat_to_rotation_matrix(Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));

  const double h = std::sqrt(0.5);
  const Mat3 Rz = quat_to_rotation_matrix(Vec4(h, 0, 0, h));
  CHECK((Rz * Vec3::UnitX() - Vec3::UnitY()).norm() < 1e-12);

  CHECK_THROWS_AS(quat_to_rotation_matrix(Vec4::Zero()), std::invalid_argument);

  Gen g(1);
  for (int i = 0; i < 200; ++i) {
    const Vec4 q = g.quat() * g.log_uniform(0.1, 10.0);  // unnormalized input
    const Mat3 R = quat_to_rotation_matrix(q);
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("quaternion backward matches finite differences") {
  Gen g(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec4 q = g.quat() * g.uniform(0.5, 2.0);
    Mat3 G;
    for (int i = 0; i < 9; ++i) G.data()[i] = g.uniform(-1, 1);
    const Vec4 analytic = quat_to_rotation_matrix_backward(q, G);
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-6;
      Vec4 qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const double fd =
          ((quat_to_rotation_matrix(qp) - quat_to_rotation_matrix(qm)).cwiseProduct(G).sum()) / (2 * h);
      CHECK(std::abs(fd - analytic[k]) < 1e-7);
    }
  }
}

TEST_CASE("world_to_local") {
  Ellipsoid e = Ellipsoid::make(Vec3(1, 2, 3), Vec3(2, 1, 0.5), Vec4(1, 0, 0, 0));
  CHECK(world_to_local(e, e.center).norm() < 1e-15);
  const Ellipsoid unit = Ellipsoid::make(Vec3::Zero(), Vec3::Ones(), Vec4(1, 0, 0, 0));
  CHECK((world_to_local(unit, Vec3::UnitX()) - Vec3::UnitX()).norm() < 1e-15);

  Gen g(3);
  for (int i = 0; i < 200; ++i) {
    const Ellipsoid r = Ellipsoid::make(g.vec3(-3, 3), Vec3(g.log_uniform(0.1, 10), g.log_uniform(0.1, 10),
                                                           g.log_uniform(0.1, 10)), g.quat());
    const Vec3 x = r.center + r.rotation_matrix() * g.unit().cwiseProduct(r.scale);
    CHECK(std::abs(world_to_local(r, x).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("ellipsoid construction validates and normalizes") {
  CHECK_THROWS(Ellipsoid::make(Vec3::Zero(), Vec3(1, 0, 1), Vec4(1, 0, 0, 0)));
  CHECK_THROWS(Ellipsoid::make(Vec3::Zero(), Vec3(1, -1, 1), Vec4(1, 0, 0, 0)));
  CHECK_THROWS(Ellipsoid::make(Vec3::Zero(), Vec3::Ones(), Vec4::Zero()));
  const Ellipsoid e = Ellipsoid::make(Vec3::Zero(), Vec3::Ones(), Vec4(2, 0, 0, 0));
  CHECK(std::abs(e.rotation.norm() - 1.0) < 1e-12);
}

TEST_CASE("ray construction") {
  const Ray r = Ray::make(Vec3::Zero(), Vec3(3, 4, 0), 0.0, 10.0);
  CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
  CHECK_THROWS(Ray::make(Vec3::Zero(), Vec3::Zero(), 0.0, 1.0));
  CHECK_THROWS(Ray::make(Vec3::Zero(), Vec3::UnitX(), 1.0, 1.0));
  CHECK_THROWS(Ray::make(Vec3::Zero(), Vec3::UnitX(), -1.0, 1.0));
}

TEST_CASE("ray-ellipsoid intersection examples") {
  const Ellipsoid unit = Ellipsoid::make(Vec3::Zero(), Vec3::Ones(), Vec4(1, 0, 0, 0));

  auto hit = intersect(unit, Ray::make(Vec3(-2, 0, 0), Vec3::UnitX(), 0.0, 100.0));
  REQUIRE(hit);
  CHECK(hit->t_in == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit->t_out == doctest::Approx(3.0).epsilon(1e-12));

  CHECK_FALSE(intersect(unit, Ray::make(Vec3(-2, 2, 0), Vec3::UnitX(), 0.0, 100.0)));

  const Ellipsoid rotated =
      Ellipsoid::make(Vec3::Zero(), Vec3(2, 1, 1), axis_angle(Vec3::UnitZ(), std::numbers::pi / 2));
  hit = intersect(rotated, Ray::make(Vec3(0, -5, 0), Vec3::UnitY(), 0.0, 100.0));
  REQUIRE(hit);
  CHECK(hit->t_in == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(hit->t_out == doctest::Approx(7.0).epsilon(1e-12));

  hit = intersect(unit, Ray::make(Vec3::Zero(), Vec3::UnitX(), 0.0, 100.0));
  REQUIRE(hit);
  CHECK(hit->t_in == 0.0);
  CHECK(hit->entry_clipped);
  CHECK(hit->t_out == doctest::Approx(1.0).epsilon(1e-12));

  // Tangent ray is a miss.
  CHECK_FALSE(intersect(unit, Ray::make(Vec3(-2, 1, 0), Vec3::UnitX(), 0.0, 100.0)));
  // Behind the ray's range.
  CHECK_FALSE(intersect(unit, Ray::make(Vec3(2, 0, 0), Vec3::UnitX(), 0.0, 100.0)));
  // Range ends inside.
  hit = intersect(unit, Ray::make(Vec3(-2, 0, 0), Vec3::UnitX(), 0.0, 2.0));
  REQUIRE(hit);
  CHECK(hit->exit_clipped);
  CHECK(hit->t_out == 2.0);
}

TEST_CASE("intersection agrees with sign-change bisection") {
  Gen g(4);
  int compared = 0;
  for (int i = 0; i < 10000; ++i) {
    const Ellipsoid e = Ellipsoid::make(g.vec3(-1, 1), Vec3(g.log_uniform(0.1, 2), g.log_uniform(0.1, 2),
                                                           g.log_uniform(0.1, 2)), g.quat());
    const Vec3 target = e.center + g.vec3(-1.5, 1.5);
    const Vec3 d = g.unit();
    const Ray r = Ray::make(target - 6.0 * d, d, g.uniform(0.0, 3.0), 12.0);
    const auto hit = intersect(e, r);
    const auto ref = bisection_overlap(e, r, 2000);
    if (hit && ref) {
      if (hit->length() < 1e-4) continue;  // roots are ill-conditioned near tangency
      ++compared;
      CHECK(std::abs(hit->t_in - ref->first) < 1e-9);
      CHECK(std::abs(hit->t_out - ref->second) < 1e-9);
    } else if (ref) {
      FAIL("missed overlap found by the scan at case " << i);
    } else if (hit) {
      CHECK(hit->length() < 2.0 * (r.t_far - r.t_near) / 2000);
    }
  }
  CHECK(compared > 1000);
}

TEST_CASE("intersection properties") {
  Gen g(5);
  for (int i = 0; i < 2000; ++i) {
    const Ellipsoid e = Ellipsoid::make(g.vec3(-1, 1), Vec3(g.log_uniform(0.1, 3), g.log_uniform(0.1, 3),
                                                           g.log_uniform(0.1, 3)), g.quat());
    const Vec3 d = g.unit();
    const Ray r = Ray::make(e.center + g.vec3(-0.5, 0.5) - 8.0 * d, d, 0.0, 100.0);
    const auto hit = intersect(e, r);
    if (!hit) continue;
    CHECK(hit->t_in <= hit->t_out);
    CHECK(hit->t_in >= r.t_near);
    CHECK(hit->t_out <= r.t_far);
    const double mid = 0.5 * (hit->t_in + hit->t_out);
    CHECK(implicit_value(e, r.origin + mid * r.direction) < 1.0);

    const Vec3 shift = g.vec3(-10, 10);
    Ellipsoid e2 = e;
    e2.center += shift;
    const auto moved = intersect(e2, Ray::make(r.origin + shift, r.direction, r.t_near, r.t_far));
    REQUIRE(moved);
    CHECK(std::abs(moved->t_in - hit->t_in) < 1e-9);
    CHECK(std::abs(moved->t_out - hit->t_out) < 1e-9);

    const Vec4 qr = g.quat();
    const Mat3 Q = quat_to_rotation_matrix(qr);
    const Mat3 Rr = Q * e.rotation_matrix();
    const Eigen::Quaterniond qq(Rr);
    const Ellipsoid e3 = Ellipsoid::make(Q * e.center, e.scale, Vec4(qq.w(), qq.x(), qq.y(), qq.z()));
    const auto turned = intersect(e3, Ray::make(Q * r.origin, Q * r.direction, r.t_near, r.t_far));
    REQUIRE(turned);
    CHECK(std::abs(turned->t_in - hit->t_in) < 1e-7);
    CHECK(std::abs(turned->t_out - hit->t_out) < 1e-7);

    // The cached frame agrees with the direct path.
    const auto framed = intersect(EllipsoidFrame(e), r);
    REQUIRE(framed);
    CHECK(std::abs(framed->t_in - hit->t_in) < 1e-12);
  }
}

TEST_CASE("surface root gradient matches finite differences") {
  Gen g(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Ellipsoid e = Ellipsoid::make(g.vec3(-1, 1), Vec3(g.log_uniform(0.3, 2), g.log_uniform(0.3, 2),
                                                           g.log_uniform(0.3, 2)), g.quat());
    const Vec3 d = g.unit();
    const Ray r = Ray::make(e.center + 0.3 * g.vec3(-1, 1).cwiseProduct(e.scale) - 8.0 * d, d, 0.0, 100.0);
    const auto hit = intersect(e, r);
    if (!hit || hit->length() < 1e-2) continue;
    const EndpointGradient grad = surface_root_gradient(EllipsoidFrame(e), r, hit->t_in);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Ellipsoid ep = e, em = e;
      ep.center[k] += h;
      em.center[k] -= h;
      const double fd = (intersect(ep, r)->t_in - intersect(em, r)->t_in) / (2 * h);
      CHECK(std::abs(fd - grad.d_center[k]) < 1e-5 * std::max(1.0, std::abs(fd)));
      ep = e;
      em = e;
      ep.scale[k] += h;
      em.scale[k] -= h;
      const double fs = (intersect(ep, r)->t_in - intersect(em, r)->t_in) / (2 * h);
      CHECK(std::abs(fs - grad.d_scale[k]) < 1e-5 * std::max(1.0, std::abs(fs)));
    }
  }
}
