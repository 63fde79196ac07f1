#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "nspl/training.hpp"

namespace nspl {

std::vector<double> mean_neighbor_distance(std::span<const Vec3> points, int k) {
  if (k < 1) throw std::invalid_argument("mean_neighbor_distance: k must be >= 1");
  const std::size_t n = points.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  const std::size_t kk = std::min<std::size_t>(std::size_t(k), n - 1);

  // Sweep along x: candidates further than the current k-th best in x alone
  // cannot improve it.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a].x() < points[b].x() || (points[a].x() == points[b].x() && a < b);
  });

  std::vector<double> best;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const Vec3& p = points[order[pos]];
    best.clear();
    const auto consider = [&](std::size_t j) {
      const double d2 = (points[j] - p).squaredNorm();
      if (best.size() < kk) {
        best.push_back(d2);
        std::push_heap(best.begin(), best.end());
      } else if (d2 < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = d2;
        std::push_heap(best.begin(), best.end());
      }
    };
    const auto bound = [&](double dx) { return best.size() == kk && dx * dx > best.front(); };
    std::size_t lo = pos, hi = pos + 1;
    bool go_lo = lo > 0, go_hi = hi < n;
    while (go_lo || go_hi) {
      if (go_lo) {
        --lo;
        if (bound(p.x() - points[order[lo]].x())) {
          go_lo = false;
        } else {
          consider(order[lo]);
          go_lo = lo > 0;
        }
      }
      if (go_hi) {
        if (bound(points[order[hi]].x() - p.x())) {
          go_hi = false;
        } else {
          consider(order[hi]);
          ++hi;
          go_hi = hi < n;
        }
      }
    }
    double sum = 0.0;
    for (double d2 : best) sum += std::sqrt(d2);
    out[order[pos]] = sum / double(best.size());
  }
  return out;
}

Scene init_scene(std::span<const Vec3> points, const PrimitiveConfig& pcfg, const InitConfig& icfg) {
  if (points.empty()) throw std::invalid_argument("init_scene: empty point list");
  if (!(icfg.extent > 0.0)) throw std::invalid_argument("init_scene: extent must be positive");
  pcfg.validate();

  Scene scene;
  scene.config = pcfg;
  scene.background = icfg.background;
  scene.extent = icfg.extent;

  const std::vector<double> spacing = mean_neighbor_distance(points);
  const double lo = 1e-4 * icfg.extent, hi = 0.1 * icfg.extent;
  const double w2_bound = std::sqrt(6.0 / pcfg.hidden) / pcfg.omega;
  std::mt19937_64 rng(icfg.seed);
  std::uniform_real_distribution<double> w1_dist(-1.0 / 3.0, 1.0 / 3.0);
  std::uniform_real_distribution<double> w2_dist(-w2_bound, w2_bound);

  scene.primitives.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    NeuralPrimitive p = NeuralPrimitive::zeros(pcfg);
    // A lone point has no neighbors and takes the upper clamp.
    const double s = points.size() == 1 ? hi : std::clamp(spacing[i], lo, hi);
    p.geometry.center = points[i];
    p.geometry.scale = Vec3::Constant(s);
    for (int k = 0; k < pcfg.hidden; ++k) {
      p.net.w1[k] = Vec3(w1_dist(rng), w1_dist(rng), w1_dist(rng));
      p.net.w2[k] = w2_dist(rng);
    }
    p.net.b2 = icfg.b2;
    scene.primitives.push_back(std::move(p));
  }
  return scene;
}

}  // namespace nspl
