#pragma once

#include <array>
#include <span>
#include <vector>

#include "nspl/types.hpp"

namespace nspl {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real spherical-harmonic coefficients, one RGB triple per basis function.
struct SHCoefficients {
  int degree = kMaxShDegree;
  std::vector<Rgb> coeffs = std::vector<Rgb>(kMaxShCoeffs, Rgb::Zero());

  static SHCoefficients zeros(int degree);
  int count() const { return static_cast<int>(coeffs.size()); }
};

/// Polynomial + Fourier series driving the zero-order coefficient over
/// normalized time. The base coefficient itself lives in SHCoefficients.
struct TemporalSH {
  std::vector<Rgb> poly;      // a_1..a_n
  std::vector<Rgb> four_cos;  // b_1..b_l
  std::vector<Rgb> four_sin;  // c_1..c_l

  static TemporalSH zeros(int poly_order, int fourier_order);
  int scalar_count() const { return 3 * static_cast<int>(poly.size() + four_cos.size() + four_sin.size()); }
};

/// Fills `out` with the first (degree+1)^2 real SH basis values at `dir`.
void sh_basis(int degree, const Vec3& dir, std::span<double> out);

/// max(0, sum_lm Y_lm(dir) c_lm + 0.5) per channel.
Rgb sh_eval(const SHCoefficients& sh, const Vec3& dir);

/// Evaluation against a precomputed basis, with the DC coefficient replaced.
Rgb sh_eval_basis(std::span<const Rgb> coeffs, const Rgb& dc, std::span<const double> basis);

/// d(color)/d(coeffs) contracted with `upstream`; zero on clamped channels.
std::vector<Rgb> sh_backward(const SHCoefficients& sh, const Vec3& dir, const Rgb& upstream);

/// S0 + sum_i a_i xi^i + sum_i (b_i cos(i xi) + c_i sin(i xi)).
Rgb temporal_sh0(const Rgb& s0, const TemporalSH& t, double xi);

/// Series part of temporal_sh0, i.e. the offset added to S0.
Rgb temporal_series(const TemporalSH& t, double xi);

/// Basis weights of the series: xi^i for the polynomial terms, then cos(i xi),
/// then sin(i xi).
void temporal_series_weights(const TemporalSH& t, double xi, std::span<double> out);

}  // namespace nspl
