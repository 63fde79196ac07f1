#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nspl/camera.hpp"
#include "nspl/image.hpp"
#include "nspl/scene.hpp"

namespace nspl {

struct Dataset {
  std::vector<Camera> cameras;
  std::vector<Image> images;  // linear RGB, alpha already composited
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  double extent = 1.0;
  Rgb background = Rgb::Zero();

  std::size_t size() const { return cameras.size(); }
  bool empty() const { return cameras.empty(); }
  /// Throws unless cameras and images pair up, sizes match and the split
  /// indices are valid.
  void validate() const;
};

struct LoadOptions {
  int downscale = 1;
  /// Compositing background for images with alpha. Blender data defaults to
  /// white, camera-file data to black.
  std::optional<Rgb> background;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Smallest sphere containing every point (Welzl's algorithm, randomized
/// with a fixed seed).
Sphere min_enclosing_sphere(std::span<const Vec3> points);

/// Radius of the smallest sphere around the camera centers; 1 when the
/// cameras (nearly) coincide.
double camera_extent(std::span<const Camera> cameras);

/// NeRF synthetic layout: transforms_train.json, transforms_test.json and
/// (optionally) transforms_val.json, which is ignored.
Dataset load_nerf_blender(const std::filesystem::path& dir, const LoadOptions& opts = {});

/// Plain-text camera layout: `cameras.txt`, images under `images/`, and an
/// optional `split.txt` of `name train|test` lines. Without a split file
/// every eighth image is held out for testing.
Dataset load_colmap_like(const std::filesystem::path& dir, const LoadOptions& opts = {});

/// Picks the loader from the directory contents.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& opts = {});

/// One camera per line:
///   name w h fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz [time]
/// with (r, t) the world-from-camera pose. Blank lines and '#' comments are
/// skipped.
std::vector<Camera> read_camera_file(const std::filesystem::path& path);
void write_camera_file(const std::filesystem::path& path, std::span<const Camera> cameras);

/// Writes a complete camera-file dataset (cameras.txt, split.txt, PNGs).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

/// ASCII PLY (vertex x/y/z, extra properties ignored) or whitespace-separated
/// xyz text. `subsample` > 0 draws that many distinct points uniformly with
/// `seed`, keeping their file order.
std::vector<Vec3> load_points(const std::filesystem::path& path, std::size_t subsample = 0, std::uint64_t seed = 0);
std::vector<Vec3> subsample_points(std::span<const Vec3> points, std::size_t count, std::uint64_t seed);
void write_points_ply(const std::filesystem::path& path, std::span<const Vec3> points);

// Checkpoints: "NSPL", u32 version, u32 header bytes, u32 floats per record,
// then the header (u32 hidden, f32 omega, u32 sh degree, u32 flags,
// u32 poly order, u32 fourier order, f32 background[3], f32 extent,
// u64 count) and count little-endian float32 records in ParamLayout order.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointPreambleBytes = 16;
inline constexpr std::size_t kCheckpointHeaderBytes = 48;

std::vector<std::uint8_t> encode_checkpoint(const Scene& scene);
Scene decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Scene& scene, const std::filesystem::path& path);
Scene load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32, i.e. what a checkpoint stores.
void quantize_to_float(Scene& scene);

}  // namespace nspl
