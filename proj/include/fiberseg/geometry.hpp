#pragma once

// Fiber geometry: resampling, polyline length and the fiber distance metrics.
//
// Coordinates are stored as 32-bit floats in millimeters. Every distance is
// accumulated and compared in double precision so results do not depend on
// evaluation order or vector width.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace fiberseg {

inline constexpr std::size_t kResampledPoints = 21;
inline constexpr std::size_t kCenterIndex = kResampledPoints / 2;
inline constexpr std::size_t kLastIndex = kResampledPoints - 1;

struct Point3 {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;

  friend bool operator==(const Point3&, const Point3&) = default;
};

/// A fiber resampled to exactly 21 points, the unit of all distance work.
using ResampledFiber = std::array<Point3, kResampledPoints>;

/// Index pairing between a fiber and a centroid: a[i] <-> c[i] (direct) or
/// a[i] <-> c[20 - i] (inverse).
enum class Orientation : std::uint8_t { direct, inverse };

/// Thrown for geometrically invalid input (degenerate or non-finite fibers).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline bool is_finite(const Point3& p) noexcept {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

inline double squared_distance(const Point3& p, const Point3& q) noexcept {
  const double dx = static_cast<double>(p.x) - static_cast<double>(q.x);
  const double dy = static_cast<double>(p.y) - static_cast<double>(q.y);
  const double dz = static_cast<double>(p.z) - static_cast<double>(q.z);
  return dx * dx + dy * dy + dz * dz;
}

inline double point_distance(const Point3& p, const Point3& q) noexcept {
  return std::sqrt(squared_distance(p, q));
}

/// Index of the centroid point paired with fiber point `i`.
inline constexpr std::size_t paired_index(std::size_t i, Orientation o) noexcept {
  return o == Orientation::direct ? i : kLastIndex - i;
}

/// Sum of segment chord lengths. Throws InvalidInput for fewer than two
/// points or a zero-length polyline.
double polyline_length(std::span<const Point3> points);

/// Resamples to `n` points equally spaced in arc length along the input
/// polyline. Endpoints are copied exactly.
std::vector<Point3> resample(std::span<const Point3> points, std::size_t n);

/// resample() with n = 21.
ResampledFiber resample_fiber(std::span<const Point3> points);

ResampledFiber reversed(const ResampledFiber& f);

/// Maximum pointwise distance under one orientation.
double max_pointwise_distance(const ResampledFiber& a, const ResampledFiber& b,
                              Orientation orientation);

/// Maximum Euclidean distance, minimized over both orientations.
double d_me(const ResampledFiber& a, const ResampledFiber& b);

/// Length-mismatch penalty (|ls - lc| / max(ls, lc) + 1)^2 - 1.
double tn(double length_s, double length_c);

/// d_me(a, b) + tn(length(a), length(b)), lengths measured on the 21-point
/// polylines.
double normalized_distance(const ResampledFiber& a, const ResampledFiber& b);

/// Strict threshold test `distance > limit` evaluated on squared distances.
///
/// The squared limit is the largest double s with sqrt(s) <= limit, so
/// exceeded(d2) == (sqrt(d2) > limit) holds exactly for every d2 >= 0.
class DistanceBound {
 public:
  explicit DistanceBound(double limit);

  double limit() const noexcept { return limit_; }
  double squared_limit() const noexcept { return squared_limit_; }
  bool exceeded(double squared) const noexcept { return squared > squared_limit_; }

 private:
  double limit_;
  double squared_limit_;
};

}  // namespace fiberseg
