#include <cmath>
#include <stdexcept>

#include "nspl/training.hpp"

namespace nspl {

ParamGroup group_of(const ParamLayout& l, int offset) {
  if (offset < 0 || offset >= l.size) throw std::out_of_range("group_of: offset outside record");
  if (offset < l.scale) return ParamGroup::kMeans;
  if (offset < l.rotation) return ParamGroup::kScales;
  if (offset < l.w1) return ParamGroup::kQuats;
  if (offset < l.sh) return ParamGroup::kMlp;
  if (!l.temporal || offset < l.wt) return ParamGroup::kSh;
  if (offset < l.poly) return ParamGroup::kMlp;
  return ParamGroup::kSh;
}

std::size_t adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, std::uint64_t step, const AdamHyper& h) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("adam_update: size mismatch");
  }
  if (step == 0) throw std::invalid_argument("adam_update: step is 1-based");
  const double bc1 = 1.0 - std::pow(h.beta1, double(step));
  const double bc2 = 1.0 - std::pow(h.beta2, double(step));
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      ++skipped;
      continue;
    }
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
  return skipped;
}

OptimizerState::OptimizerState(const ParamLayout& layout, std::size_t count)
    : record(layout.size), m(count * layout.size, 0.0), v(count * layout.size, 0.0) {}

void OptimizerState::remap(const std::vector<std::int64_t>& source) {
  std::vector<double> nm(source.size() * record, 0.0), nv(source.size() * record, 0.0);
  const std::size_t n = count();
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] < 0) continue;
    if (std::size_t(source[i]) >= n) throw std::out_of_range("OptimizerState::remap: source index");
    std::copy_n(m.begin() + source[i] * record, record, nm.begin() + i * record);
    std::copy_n(v.begin() + source[i] * record, record, nv.begin() + i * record);
  }
  m = std::move(nm);
  v = std::move(nv);
}

std::size_t adam_step(Scene& scene, OptimizerState& state, const GradientBuffer& grads, const TrainConfig& cfg) {
  const ParamLayout l = scene.layout();
  if (state.record != l.size || state.count() != scene.size() || grads.count != scene.size()) {
    throw std::invalid_argument("adam_step: optimizer, gradient and scene shapes differ");
  }
  ++state.step;
  const double lr_means = cfg.lr_means * (cfg.scale_means_lr ? scene.extent : 1.0);
  const auto hyper = [&](double lr) { return AdamHyper{lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}; };

  struct Block {
    int begin, end;
    AdamHyper h;
  };
  std::vector<Block> blocks = {
      {l.center, l.scale, hyper(lr_means)},
      {l.scale, l.rotation, hyper(cfg.lr_scales)},
      {l.rotation, l.w1, hyper(cfg.lr_quats)},
      {l.w1, l.sh, hyper(cfg.lr_mlp)},
      {l.sh, l.sh + 3 * l.sh_count, hyper(cfg.lr_sh)},
  };
  if (l.temporal) {
    blocks.push_back({l.wt, l.poly, hyper(cfg.lr_mlp)});
    blocks.push_back({l.poly, l.size, hyper(cfg.lr_sh)});
  }

  std::size_t skipped = 0;
  std::vector<double> rec(l.size), g(l.size);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    NeuralPrimitive& p = scene.primitives[i];
    pack(p, l, rec);
    const auto gr = grads.record(i);
    std::copy(gr.begin(), gr.end(), g.begin());
    // Scales live in log space: d/d(log s) = s * d/ds.
    for (int k = 0; k < 3; ++k) {
      rec[l.scale + k] = std::log(rec[l.scale + k]);
      g[l.scale + k] *= p.geometry.scale[k];
    }
    double* mi = state.m.data() + i * l.size;
    double* vi = state.v.data() + i * l.size;
    for (const Block& b : blocks) {
      const std::size_t n = std::size_t(b.end - b.begin);
      skipped += adam_update({rec.data() + b.begin, n}, {g.data() + b.begin, n}, {mi + b.begin, n},
                             {vi + b.begin, n}, state.step, b.h);
    }
    for (int k = 0; k < 3; ++k) rec[l.scale + k] = std::exp(rec[l.scale + k]);
    p = unpack(scene.config, l, rec);
  }
  state.skipped_nonfinite += skipped;
  return skipped;
}

}  // namespace nspl
