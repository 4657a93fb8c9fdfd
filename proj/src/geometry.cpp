#include "fiberseg/geometry.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace fiberseg {

double polyline_length(std::span<const Point3> points) {
  if (points.size() < 2) {
    throw InvalidInput("fiber needs at least 2 points, got " + std::to_string(points.size()));
  }
  double length = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    length += point_distance(points[i - 1], points[i]);
  }
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw InvalidInput("degenerate fiber: polyline length is zero or not finite");
  }
  return length;
}

std::vector<Point3> resample(std::span<const Point3> points, std::size_t n) {
  if (n < 2) {
    throw InvalidInput("resampling needs at least 2 output points");
  }
  polyline_length(points);  // validates

  std::vector<double> cumulative(points.size());
  cumulative[0] = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    cumulative[i] = cumulative[i - 1] + point_distance(points[i - 1], points[i]);
  }
  const double total = cumulative.back();
  const std::size_t last_segment = points.size() - 2;

  std::vector<Point3> out(n);
  out.front() = points.front();
  out.back() = points.back();

  std::size_t seg = 0;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg < last_segment && cumulative[seg + 1] < s) {
      ++seg;
    }
    const Point3& p = points[seg];
    const Point3& q = points[seg + 1];
    const double span = cumulative[seg + 1] - cumulative[seg];
    const double t = span > 0.0 ? std::clamp((s - cumulative[seg]) / span, 0.0, 1.0) : 0.0;
    out[k] = Point3{
        static_cast<float>(p.x + t * (static_cast<double>(q.x) - p.x)),
        static_cast<float>(p.y + t * (static_cast<double>(q.y) - p.y)),
        static_cast<float>(p.z + t * (static_cast<double>(q.z) - p.z)),
    };
  }
  return out;
}

ResampledFiber resample_fiber(std::span<const Point3> points) {
  const std::vector<Point3> pts = resample(points, kResampledPoints);
  ResampledFiber out;
  std::copy(pts.begin(), pts.end(), out.begin());
  return out;
}

ResampledFiber reversed(const ResampledFiber& f) {
  ResampledFiber out;
  std::reverse_copy(f.begin(), f.end(), out.begin());
  return out;
}

double max_pointwise_distance(const ResampledFiber& a, const ResampledFiber& b,
                              Orientation orientation) {
  double worst = 0.0;
  for (std::size_t i = 0; i < kResampledPoints; ++i) {
    worst = std::max(worst, point_distance(a[i], b[paired_index(i, orientation)]));
  }
  return worst;
}

double d_me(const ResampledFiber& a, const ResampledFiber& b) {
  return std::min(max_pointwise_distance(a, b, Orientation::direct),
                  max_pointwise_distance(a, b, Orientation::inverse));
}

double tn(double length_s, double length_c) {
  const double longest = std::max(length_s, length_c);
  if (!(longest > 0.0) || length_s < 0.0 || length_c < 0.0) {
    throw InvalidInput("length normalization needs non-negative lengths, not both zero");
  }
  const double ratio = std::abs(length_s - length_c) / longest + 1.0;
  return ratio * ratio - 1.0;
}

double normalized_distance(const ResampledFiber& a, const ResampledFiber& b) {
  return d_me(a, b) + tn(polyline_length(a), polyline_length(b));
}

DistanceBound::DistanceBound(double limit) : limit_(limit) {
  if (!(limit >= 0.0) || !std::isfinite(limit)) {
    throw InvalidInput("distance limit must be finite and non-negative");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double s = limit * limit;
  while (s > 0.0 && std::sqrt(s) > limit) {
    s = std::nextafter(s, 0.0);
  }
  while (std::sqrt(std::nextafter(s, kInf)) <= limit) {
    s = std::nextafter(s, kInf);
  }
  squared_limit_ = s;
}

}  // namespace fiberseg
