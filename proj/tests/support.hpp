#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "nspl/neural_field.hpp"
#include "nspl/scene.hpp"

namespace nspl::test {

/// Small seeded generator for the hand-rolled property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  Vec3 vec3(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }
  Vec3 unit() {
    std::normal_distribution<double> n;
    Vec3 v;
    do v = Vec3(n(rng_), n(rng_), n(rng_));
    while (v.norm() < 1e-6);
    return v.normalized();
  }
  Vec4 quat() {
    std::normal_distribution<double> n;
    Vec4 q(n(rng_), n(rng_), n(rng_), n(rng_));
    return q.normalized();
  }

  /// Primitive with log-uniform scales and a random density network.
  NeuralPrimitive primitive(const PrimitiveConfig& cfg = {}, double min_scale = 0.1, double max_scale = 2.0) {
    NeuralPrimitive p = NeuralPrimitive::zeros(cfg);
    p.geometry.center = vec3(-1.0, 1.0);
    p.geometry.scale = Vec3(log_uniform(min_scale, max_scale), log_uniform(min_scale, max_scale),
                            log_uniform(min_scale, max_scale));
    p.geometry.rotation = quat();
    for (int k = 0; k < p.net.width(); ++k) {
      p.net.w1[k] = vec3(-1.0, 1.0);
      p.net.b1[k] = uniform(-1.0, 1.0);
      p.net.w2[k] = uniform(-0.5, 0.5);
    }
    p.net.b2 = uniform(-0.5, 1.0);
    for (auto& c : p.sh.coeffs) c = vec3(-0.3, 0.3);
    if (p.temporal_sh) {
      for (auto& c : p.temporal_sh->poly) c = vec3(-0.1, 0.1);
      for (auto& c : p.temporal_sh->four_cos) c = vec3(-0.1, 0.1);
      for (auto& c : p.temporal_sh->four_sin) c = vec3(-0.1, 0.1);
    }
    for (auto& w : p.net.wt) w = uniform(-1.0, 1.0);
    return p;
  }

  /// Ray from outside the bounding sphere of `p` through a point inside it.
  Ray ray_through(const NeuralPrimitive& p) {
    const Mat3 R = p.geometry.rotation_matrix();
    Vec3 local;
    do local = vec3(-1.0, 1.0);
    while (local.squaredNorm() > 0.8);
    const Vec3 inside = p.geometry.center + R * local.cwiseProduct(p.geometry.scale);
    const Vec3 d = unit();
    const double back = 2.0 * p.geometry.max_scale() + 1.0;
    return Ray::make(inside - back * d, d, 0.0, 1e4);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nspl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace nspl::test
