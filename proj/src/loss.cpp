#include <cmath>
#include <stdexcept>

#include "nspl/metrics.hpp"
#include "nspl/training.hpp"

namespace nspl {

double geometric_regularizer(const Scene& scene, std::vector<Vec3>* grad) {
  if (grad) grad->assign(scene.size(), Vec3::Zero());
  if (scene.empty()) return 0.0;
  const double inv_n = 1.0 / double(scene.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3& s = scene.primitives[i].geometry.scale;
    const Vec3 dev = s.array() - s.mean();
    const double sd = std::sqrt(dev.squaredNorm() / 3.0);
    total += sd;
    // d sd / d s_k = (s_k - mean) / (3 sd); zero at the isotropic optimum.
    if (grad && sd > 0.0) (*grad)[i] = dev * (inv_n / (3.0 * sd));
  }
  return total * inv_n;
}

LossResult loss(const Image& rendered, const Image& target, const Scene& scene, const TrainConfig& cfg) {
  if (!rendered.same_shape(target)) throw std::invalid_argument("loss: rendered and target shapes differ");
  LossResult out;
  const double lambda = cfg.ssim_weight;
  const double inv_count = 1.0 / double(rendered.data.size());

  out.l1 = mean_abs_error(rendered, target);
  Image ssim_grad;
  const double s = ssim_with_gradient(rendered, target, ssim_grad);
  out.dssim = 1.0 - s;
  out.geo_reg = geometric_regularizer(scene, &out.scale_grad);
  for (auto& g : out.scale_grad) g *= cfg.geo_reg_weight;
  out.total = (1.0 - lambda) * out.l1 + lambda * out.dssim + cfg.geo_reg_weight * out.geo_reg;

  out.pixel_grad = Image(rendered.width, rendered.height);
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    out.pixel_grad.data[i] = (1.0 - lambda) * sign * inv_count - lambda * ssim_grad.data[i];
  }
  return out;
}

}  // namespace nspl
