#include <cmath>
#include <stdexcept>

#include "nspl/training.hpp"

namespace nspl {

double mlp_gradient_norm(const ParamLayout& l, std::span<const double> record) {
  double sq = 0.0;
  for (int i = l.w1; i < l.sh; ++i) sq += record[i] * record[i];
  return std::sqrt(sq);
}

std::vector<double> collect_densify_stat(const GradientBuffer& grads) {
  std::vector<double> out(grads.count, 0.0);
  for (std::size_t i = 0; i < grads.count; ++i) {
    if (grads.touched[i]) out[i] = mlp_gradient_norm(grads.layout, grads.record(i));
  }
  return out;
}

void DensifyStats::accumulate(const GradientBuffer& grads) {
  if (grads.count != norm_sum.size()) throw std::invalid_argument("DensifyStats: primitive count changed");
  const std::vector<double> step = collect_densify_stat(grads);
  for (std::size_t i = 0; i < step.size(); ++i) {
    if (!grads.touched[i]) continue;
    norm_sum[i] += step[i];
    ++steps[i];
  }
}

std::vector<double> DensifyStats::values() const {
  std::vector<double> out(norm_sum.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (steps[i]) out[i] = norm_sum[i] / double(steps[i]);
  }
  return out;
}

void DensifyStats::reset(std::size_t n) {
  norm_sum.assign(n, 0.0);
  steps.assign(n, 0);
}

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

}  // namespace

PopulationReport densify_and_prune(Scene& scene, std::span<const double> stats, OptimizerState& state,
                                   const TrainConfig& cfg, std::mt19937_64& rng) {
  if (stats.size() != scene.size()) throw std::invalid_argument("densify_and_prune: one stat per primitive");
  PopulationReport rep;
  rep.before = scene.size();

  const double grow_scale = cfg.grow_scale_threshold * scene.extent;
  const double prune_scale = cfg.prune_scale_threshold * scene.extent;

  std::vector<NeuralPrimitive> kept, added;
  std::vector<std::int64_t> kept_src, added_parent;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const NeuralPrimitive& p = scene.primitives[i];
    const double smax = p.geometry.max_scale();
    const double s = stats[i];
    if (smax > prune_scale) {
      ++rep.pruned_large;
      continue;
    }
    if (s < cfg.prune_grad_threshold) {
      ++rep.pruned_low_grad;
      continue;
    }
    if (s > cfg.grow_grad_threshold && smax <= grow_scale) {
      NeuralPrimitive c = p;
      const Vec3 u = random_unit(rng);
      c.geometry.center += p.geometry.rotation_matrix() * (0.01 * p.geometry.scale.cwiseProduct(u));
      added.push_back(std::move(c));
      added_parent.push_back(std::int64_t(i));
      ++rep.cloned;
    } else if (s > cfg.grow_grad_threshold) {
      int axis = 0;
      p.geometry.scale.cwiseAbs().maxCoeff(&axis);
      const Vec3 offset = p.geometry.rotation_matrix().col(axis) * (0.5 * smax);
      for (double sign : {1.0, -1.0}) {
        NeuralPrimitive c = p;
        c.geometry.scale = p.geometry.scale / 1.6;
        c.geometry.center = p.geometry.center + sign * offset;
        added.push_back(std::move(c));
        added_parent.push_back(std::int64_t(i));
      }
      ++rep.split;
      continue;
    }
    kept.push_back(p);
    kept_src.push_back(std::int64_t(i));
  }

  if (kept.empty() && added.empty()) throw std::runtime_error("densify_and_prune: every primitive would be removed");

  rep.grown = added.size();
  rep.removed = rep.before - kept.size();
  rep.source = kept_src;
  rep.parent = kept_src;
  for (std::int64_t par : added_parent) {
    rep.source.push_back(-1);
    rep.parent.push_back(par);
  }
  for (auto& c : added) kept.push_back(std::move(c));
  scene.primitives = std::move(kept);
  rep.after = scene.size();
  state.remap(rep.source);
  return rep;
}

}  // namespace nspl
