#pragma once

// Shared oracle helpers for the test suite. These are deliberately naive,
// independent implementations used to cross-check the library.

#include <cmath>
#include <cstddef>
#include <vector>

namespace test_util {

// Dominant frequency of a real signal inside [lo_hz, hi_hz] via a direct
// O(n^2) DFT power scan with parabolic sub-bin interpolation on log power.
inline double dominant_freq_hz(const std::vector<double>& x, double fps, double lo_hz,
                               double hi_hz) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  auto power = [&](std::size_t k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      re += (x[i] - mean) * std::cos(ang);
      im += (x[i] - mean) * std::sin(ang);
    }
    return re * re + im * im;
  };

  std::size_t best_k = 0;
  double best_p = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * fps / static_cast<double>(n);
    if (f < lo_hz || f > hi_hz) continue;
    const double p = power(k);
    if (p > best_p) {
      best_p = p;
      best_k = k;
    }
  }
  if (best_k == 0) return 0.0;

  double delta = 0.0;
  if (best_k > 1 && best_k < n / 2) {
    const double l = std::log(power(best_k - 1) + 1e-300);
    const double c = std::log(best_p + 1e-300);
    const double r = std::log(power(best_k + 1) + 1e-300);
    const double denom = l - 2.0 * c + r;
    if (denom < -1e-12) delta = 0.5 * (l - r) / denom;
  }
  return (static_cast<double>(best_k) + delta) * fps / static_cast<double>(n);
}

// Naive Pearson correlation.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  sa /= static_cast<double>(n);
  sb /= static_cast<double>(n);
  double vab = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    vab += (a[i] - sa) * (b[i] - sb);
    va += (a[i] - sa) * (a[i] - sa);
    vb += (b[i] - sb) * (b[i] - sb);
  }
  return vab / std::sqrt(va * vb);
}

}  // namespace test_util
