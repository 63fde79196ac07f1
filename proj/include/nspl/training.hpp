#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nspl/image.hpp"
#include "nspl/renderer.hpp"
#include "nspl/scene.hpp"

namespace nspl {

struct Dataset;

struct TrainConfig {
  int iterations = 100000;
  double lr_mlp = 1e-3;
  double lr_means = 1.6e-4;
  double lr_scales = 5e-3;
  double lr_quats = 1e-3;
  double lr_sh = 2.5e-3;
  double ssim_weight = 0.2;
  double geo_reg_weight = 0.01;
  bool densify = true;
  int densify_interval = 500;
  int densify_start = 1000;
  int densify_end = 15000;
  double grow_grad_threshold = 1e-4;
  double prune_grad_threshold = 2e-6;
  double grow_scale_threshold = 1e-2;
  double prune_scale_threshold = 0.5;
  std::uint64_t rng_seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Multiply lr_means by the scene extent.
  bool scale_means_lr = true;
  int log_interval = 100;
  int checkpoint_interval = 0;

  /// Densification every 500 iterations in [1k, 15k], thresholds 1e-4 / 2e-6.
  static TrainConfig real_scene();
  /// Densification every 200 iterations in [1k, 20k], thresholds 1e-5 / 1e-6.
  static TrainConfig blender();

  void validate() const;
  /// Sets one field from its textual value; throws on unknown keys.
  void set(const std::string& key, const std::string& value);
};

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double total = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double geo_reg = 0.0;
  Image pixel_grad;             // dL/d(rendered)
  std::vector<Vec3> scale_grad;  // dL/d(scale) from the regularizer
};

/// Mean over primitives of the population standard deviation of the three
/// scale components.
double geometric_regularizer(const Scene& scene, std::vector<Vec3>* grad = nullptr);

/// (1 - lambda) L1 + lambda (1 - SSIM) + w_geo * geometric_regularizer.
LossResult loss(const Image& rendered, const Image& target, const Scene& scene, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Optimizer

enum class ParamGroup { kMlp, kMeans, kScales, kQuats, kSh };

ParamGroup group_of(const ParamLayout& layout, int offset);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update for a block of scalars at step `step`
/// (1-based). Non-finite gradients leave the scalar and its moments
/// untouched; the number skipped is returned.
std::size_t adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, std::uint64_t step, const AdamHyper& h);

/// Adam moments for every trainable scalar of a scene. Scales are optimized
/// as log(scale); quaternions raw.
struct OptimizerState {
  int record = 0;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  std::size_t skipped_nonfinite = 0;

  OptimizerState() = default;
  OptimizerState(const ParamLayout& layout, std::size_t count);
  std::size_t count() const { return record ? m.size() / record : 0; }

  /// Rebuilds the state for a new primitive set: entry i copies the moments
  /// of source[i], or starts at zero when source[i] < 0.
  void remap(const std::vector<std::int64_t>& source);
};

/// Applies one Adam step to every primitive; returns the number of scalars
/// skipped for non-finite gradients.
std::size_t adam_step(Scene& scene, OptimizerState& state, const GradientBuffer& grads, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Population control

/// L2 norm of the density-network block (W1, b1, W2, b2) of one record.
double mlp_gradient_norm(const ParamLayout& layout, std::span<const double> record);

/// Running mean of the per-step MLP gradient norm over the steps in which a
/// primitive was hit.
struct DensifyStats {
  std::vector<double> norm_sum;
  std::vector<std::uint32_t> steps;

  explicit DensifyStats(std::size_t n = 0) : norm_sum(n, 0.0), steps(n, 0) {}
  void accumulate(const GradientBuffer& grads);
  std::vector<double> values() const;
  void reset(std::size_t n);
};

/// Per-primitive statistic for one step: the MLP gradient norm, zero for
/// primitives that received no hit.
std::vector<double> collect_densify_stat(const GradientBuffer& grads);

struct PopulationReport {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t cloned = 0;
  std::size_t split = 0;           // parents replaced by two children
  std::size_t pruned_low_grad = 0;
  std::size_t pruned_large = 0;
  std::size_t grown = 0;           // primitives appended
  std::size_t removed = 0;         // original primitives dropped (incl. split parents)
  /// For each output primitive: its source index in the input scene, or -1
  /// when it is newly created.
  std::vector<std::int64_t> source;
  /// Parent of each output primitive (equal to source for survivors).
  std::vector<std::int64_t> parent;
};

/// Clone/split high-gradient primitives and prune low-gradient or oversized
/// ones. Survivors keep their parameters bit-for-bit; new primitives get
/// zeroed optimizer moments. Throws if the scene would become empty.
PopulationReport densify_and_prune(Scene& scene, std::span<const double> stats, OptimizerState& state,
                                   const TrainConfig& cfg, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Initialization

struct InitConfig {
  double extent = 1.0;
  std::uint64_t seed = 0;
  double b2 = 0.1;
  Rgb background = Rgb::Zero();
};

/// Mean distance to the (up to) three nearest other points, per point.
std::vector<double> mean_neighbor_distance(std::span<const Vec3> points, int k = 3);

/// One primitive per point: isotropic scale from neighbor spacing clamped to
/// [1e-4, 0.1] * extent, identity rotation, W1 ~ U(-1/3, 1/3),
/// W2 ~ U(-sqrt(6/N)/omega, sqrt(6/N)/omega), b1 = 0, zero SH.
Scene init_scene(std::span<const Vec3> points, const PrimitiveConfig& pcfg, const InitConfig& icfg);

// ---------------------------------------------------------------------------
// Training loop

struct LogRecord {
  int iter = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double geo_reg = 0.0;
  double psnr_train = 0.0;
  std::size_t n_primitives = 0;
  double wall_ms = 0.0;
  bool final = false;  // evaluated over all training views with the final scene
};

std::string to_json_line(const LogRecord& r);

struct PopulationEvent {
  int iter = 0;
  const Scene* before = nullptr;
  const Scene* after = nullptr;
  std::span<const double> stats;
  const PopulationReport* report = nullptr;
};

struct TrainOptions {
  RenderConfig render;
  std::filesystem::path metrics_log;  // JSON lines; empty disables
  std::filesystem::path checkpoint_dir;  // periodic and diagnostic checkpoints; empty disables
  std::function<void(const LogRecord&)> on_log;
  std::function<void(const PopulationEvent&)> on_population;
};

struct TrainResult {
  Scene scene;
  std::vector<LogRecord> log;
  std::size_t population_events = 0;
  std::size_t skipped_nonfinite = 0;
};

/// Error raised when the loss becomes non-finite; a diagnostic checkpoint is
/// written first when a checkpoint directory is configured.
struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TrainResult train(const Dataset& data, Scene init, const TrainConfig& cfg, const TrainOptions& opts = {});

}  // namespace nspl
