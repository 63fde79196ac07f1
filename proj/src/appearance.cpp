#include "nspl/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nspl {

namespace {

constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

}  // namespace

SHCoefficients SHCoefficients::zeros(int degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw std::invalid_argument("SHCoefficients: degree must be in [0, 3]");
  }
  return SHCoefficients{degree, std::vector<Rgb>(sh_coeff_count(degree), Rgb::Zero())};
}

TemporalSH TemporalSH::zeros(int poly_order, int fourier_order) {
  if (poly_order < 0 || fourier_order < 0) {
    throw std::invalid_argument("TemporalSH: orders must be non-negative");
  }
  return TemporalSH{std::vector<Rgb>(poly_order, Rgb::Zero()), std::vector<Rgb>(fourier_order, Rgb::Zero()),
                    std::vector<Rgb>(fourier_order, Rgb::Zero())};
}

void sh_basis(int degree, const Vec3& dir, std::span<double> out) {
  out[0] = kShC0;
  if (degree < 1) return;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[1] = -kShC1 * y;
  out[2] = kShC1 * z;
  out[3] = -kShC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  out[4] = kShC2[0] * xy;
  out[5] = kShC2[1] * yz;
  out[6] = kShC2[2] * (2.0 * zz - xx - yy);
  out[7] = kShC2[3] * xz;
  out[8] = kShC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kShC3[0] * y * (3.0 * xx - yy);
  out[10] = kShC3[1] * xy * z;
  out[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kShC3[5] * z * (xx - yy);
  out[15] = kShC3[6] * x * (xx - 3.0 * yy);
}

Rgb sh_eval_basis(std::span<const Rgb> coeffs, const Rgb& dc, std::span<const double> basis) {
  Rgb c = basis[0] * dc;
  for (std::size_t i = 1; i < coeffs.size(); ++i) c += basis[i] * coeffs[i];
  c.array() += 0.5;
  return c.cwiseMax(0.0);
}

Rgb sh_eval(const SHCoefficients& sh, const Vec3& dir) {
  std::array<double, kMaxShCoeffs> basis{};
  sh_basis(sh.degree, dir, basis);
  return sh_eval_basis(sh.coeffs, sh.coeffs[0], basis);
}

std::vector<Rgb> sh_backward(const SHCoefficients& sh, const Vec3& dir, const Rgb& upstream) {
  std::array<double, kMaxShCoeffs> basis{};
  sh_basis(sh.degree, dir, basis);
  Rgb raw = Rgb::Zero();
  for (int i = 0; i < sh.count(); ++i) raw += basis[i] * sh.coeffs[i];
  raw.array() += 0.5;
  Rgb g = upstream;
  for (int ch = 0; ch < 3; ++ch) {
    if (raw[ch] < 0.0) g[ch] = 0.0;
  }
  std::vector<Rgb> out(sh.coeffs.size());
  for (int i = 0; i < sh.count(); ++i) out[i] = basis[i] * g;
  return out;
}

void temporal_series_weights(const TemporalSH& t, double xi, std::span<double> out) {
  std::size_t k = 0;
  double p = 1.0;
  for (std::size_t i = 0; i < t.poly.size(); ++i) {
    p *= xi;
    out[k++] = p;
  }
  for (std::size_t i = 0; i < t.four_cos.size(); ++i) out[k++] = std::cos(static_cast<double>(i + 1) * xi);
  for (std::size_t i = 0; i < t.four_sin.size(); ++i) out[k++] = std::sin(static_cast<double>(i + 1) * xi);
}

Rgb temporal_series(const TemporalSH& t, double xi) {
  std::vector<double> w(t.poly.size() + t.four_cos.size() + t.four_sin.size());
  temporal_series_weights(t, xi, w);
  Rgb s = Rgb::Zero();
  std::size_t k = 0;
  for (const auto& a : t.poly) s += w[k++] * a;
  for (const auto& b : t.four_cos) s += w[k++] * b;
  for (const auto& c : t.four_sin) s += w[k++] * c;
  return s;
}

Rgb temporal_sh0(const Rgb& s0, const TemporalSH& t, double xi) { return s0 + temporal_series(t, xi); }

}  // namespace nspl
