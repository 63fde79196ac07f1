#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "nspl/camera.hpp"
#include "nspl/image.hpp"
#include "nspl/scene.hpp"

namespace nspl {

struct RenderConfig {
  /// Overrides Scene::background when set.
  std::optional<Rgb> background;
  double t_near = 0.01;
  double t_far = 1e4;
  double transmittance_floor = 1e-4;
  int max_hits_per_ray = 512;
  int threads = 0;  // 0: resolve_threads default
  /// Per-chunk gradient partials merged in a fixed order, making the backward
  /// pass bit-identical across thread counts.
  bool deterministic = true;
  /// Keep the sorted hit lists for reuse by render_backward.
  bool keep_hits = false;
  /// Clamp the output image to [0, 1]. Training disables this.
  bool clamp_output = true;
  int tile_size = 16;

  void validate() const;
};

struct RayHit {
  std::uint32_t index = 0;
  SegmentHit segment;
};

/// Sorted per-pixel hit lists in compressed row form.
struct HitStore {
  std::vector<std::uint32_t> offsets;  // pixel_count + 1
  std::vector<RayHit> hits;
};

struct RenderStats {
  std::size_t truncated_rays = 0;
  std::size_t total_hits = 0;
};

struct RenderOutput {
  Image color;
  std::optional<HitStore> hits;
  RenderStats stats;
};

/// All primitives whose ellipsoid overlaps the ray segment, ascending by t_in
/// (ties by index), truncated to cfg.max_hits_per_ray.
std::vector<RayHit> gather_hits(const Scene& scene, const Ray& r, const RenderConfig& cfg,
                                bool* truncated = nullptr);

/// Front-to-back blend of the ray's kernels and SH colors over the background.
Rgb composite(const Scene& scene, const Ray& r, const RenderConfig& cfg, double time = 0.0);

RenderOutput render(const Scene& scene, const Camera& cam, const RenderConfig& cfg);

/// Gradient of sum(dl_dcolor * color) w.r.t. every primitive parameter, where
/// color is the unclamped composite. Reuses `forward->hits` when present.
GradientBuffer render_backward(const Scene& scene, const Camera& cam, const RenderConfig& cfg,
                               const Image& dl_dcolor, const RenderOutput* forward = nullptr);

}  // namespace nspl
