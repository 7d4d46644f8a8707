#pragma once

// Small dense 3x3 kernels used by the broken-stick fits and variance oracles.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>

namespace bsdesign {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Normal-equation matrices whose 1-norm condition number exceeds this are
// treated as singular.
inline constexpr double kConditionLimit = 1e12;

inline double norm1(const Mat3& m) {
  double best = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double s = std::abs(m[0][c]) + std::abs(m[1][c]) + std::abs(m[2][c]);
    best = std::max(best, s);
  }
  return best;
}

// Gauss-Jordan inversion with partial pivoting. Returns nullopt when a pivot
// vanishes or when cond_1(m) > kConditionLimit.
inline std::optional<Mat3> invert3(const Mat3& m) {
  Mat3 a = m;
  Mat3 inv{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  const double scale = norm1(m);
  if (!(scale > 0.0) || !std::isfinite(scale)) return std::nullopt;

  for (std::size_t col = 0; col < 3; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 3; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (!(std::abs(a[piv][col]) > 0.0)) return std::nullopt;
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);

    const double d = a[col][col];
    for (std::size_t c = 0; c < 3; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }

  const double cond = scale * norm1(inv);
  if (!std::isfinite(cond) || cond > kConditionLimit) return std::nullopt;
  return inv;
}

inline Vec3 multiply(const Mat3& m, const Vec3& v) {
  Vec3 out{};
  for (std::size_t r = 0; r < 3; ++r) {
    out[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
  }
  return out;
}

}  // namespace bsdesign
