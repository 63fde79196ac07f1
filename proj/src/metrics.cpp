#include "nspl/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace nspl {

namespace {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_taps() {
  static const std::array<double, kWindow> taps = [] {
    std::array<double, kWindow> t{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kRadius;
      t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

using Plane = std::vector<double>;

// Separable Gaussian filter with zero padding, output the same size as input.
Plane blur(const Plane& in, int w, int h) {
  const auto& g = gaussian_taps();
  Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int xx = x + i - kRadius;
        if (xx >= 0 && xx < w) acc += g[i] * in[std::size_t(y) * w + xx];
      }
      tmp[std::size_t(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int yy = y + i - kRadius;
        if (yy >= 0 && yy < h) acc += g[i] * tmp[std::size_t(yy) * w + x];
      }
      out[std::size_t(y) * w + x] = acc;
    }
  }
  return out;
}

void check_shapes(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  if (a.pixel_count() == 0) throw std::invalid_argument("empty image");
}

double ssim_impl(const Image& a, const Image& b, Image* grad) {
  check_shapes(a, b);
  const int w = a.width, h = a.height;
  const std::size_t n = a.pixel_count();
  const double inv_total = 1.0 / (3.0 * double(n));
  if (grad) *grad = Image(w, h);

  double total = 0.0;
  Plane pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.data[3 * i + c];
      pb[i] = b.data[3 * i + c];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const Plane mu_a = blur(pa, w, h), mu_b = blur(pb, w, h);
    const Plane e_aa = blur(paa, w, h), e_bb = blur(pbb, w, h), e_ab = blur(pab, w, h);

    Plane d_mu(grad ? n : 0), d_eaa(grad ? n : 0), d_eab(grad ? n : 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double a1 = 2.0 * ma * mb + kC1;
      const double a2 = 2.0 * (e_ab[i] - ma * mb) + kC2;
      const double b1 = ma * ma + mb * mb + kC1;
      const double b2 = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb) + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad) {
        d_mu[i] = (2.0 * mb * a2 - 2.0 * mb * a1) / (b1 * b2) - s * (2.0 * ma / b1 - 2.0 * ma / b2);
        d_eaa[i] = -s / b2;
        d_eab[i] = 2.0 * a1 / (b1 * b2);
      }
    }
    if (grad) {
      // The symmetric zero-padded filter is its own adjoint.
      const Plane g_mu = blur(d_mu, w, h), g_aa = blur(d_eaa, w, h), g_ab = blur(d_eab, w, h);
      for (std::size_t i = 0; i < n; ++i) {
        grad->data[3 * i + c] = inv_total * (g_mu[i] + 2.0 * pa[i] * g_aa[i] + pb[i] * g_ab[i]);
      }
    }
  }
  return total * inv_total;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_shapes(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / double(a.data.size());
}

double mean_abs_error(const Image& a, const Image& b) {
  check_shapes(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / double(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (!(m > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_gradient(const Image& a, const Image& b, Image& grad_a) { return ssim_impl(a, b, &grad_a); }

}  // namespace nspl
