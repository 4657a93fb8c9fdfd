#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fiberseg/validation.hpp"

namespace fiberseg::validation {
namespace {

using Vec3 = std::array<double, 3>;

constexpr std::size_t kDensePoints = 41;
constexpr std::size_t kControlPoints = 5;
constexpr double kMinArcLength = 40.0;
constexpr double kMaxArcLength = 80.0;
constexpr int kPlacementAttempts = 20000;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-9) {
      return (1.0 / n) * v;
    }
  }
}

// Circular arc centered on its own point mean; `radius` bounds every point.
struct Arc {
  std::array<Vec3, kDensePoints> points;
  double radius = 0.0;
};

Arc random_arc(Rng& rng) {
  const double length = rng.uniform(kMinArcLength, kMaxArcLength);
  const double sweep = rng.uniform(0.4, 1.6);
  const double r = length / sweep;
  const Vec3 u = random_unit(rng);
  Vec3 w = random_unit(rng);
  Vec3 v = w - dot(w, u) * u;
  while (norm(v) < 1e-6) {
    w = random_unit(rng);
    v = w - dot(w, u) * u;
  }
  v = (1.0 / norm(v)) * v;

  Arc arc;
  Vec3 mean{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < kDensePoints; ++k) {
    const double phi = sweep * (static_cast<double>(k) / (kDensePoints - 1) - 0.5);
    arc.points[k] = (r * (std::cos(phi) - 1.0)) * u + (r * std::sin(phi)) * v;
    mean = mean + arc.points[k];
  }
  mean = (1.0 / kDensePoints) * mean;
  for (Vec3& p : arc.points) {
    p = p - mean;
    arc.radius = std::max(arc.radius, norm(p));
  }
  return arc;
}

ResampledFiber to_fiber(const std::array<Vec3, kDensePoints>& dense, const Vec3& origin) {
  std::array<Point3, kDensePoints> pts;
  for (std::size_t k = 0; k < kDensePoints; ++k) {
    const Vec3 p = dense[k] + origin;
    pts[k] = Point3{static_cast<float>(p[0]), static_cast<float>(p[1]), static_cast<float>(p[2])};
  }
  return resample_fiber(pts);
}

// Smooth perturbation: uniform offsets in [-delta, delta]^3 at evenly spaced
// control points, linearly interpolated along the curve.
std::array<Vec3, kDensePoints> perturb(const Arc& arc, double delta, Rng& rng) {
  std::array<Vec3, kControlPoints> control;
  for (Vec3& c : control) {
    c = {rng.uniform(-delta, delta), rng.uniform(-delta, delta), rng.uniform(-delta, delta)};
  }
  std::array<Vec3, kDensePoints> out;
  for (std::size_t k = 0; k < kDensePoints; ++k) {
    const double t = static_cast<double>(k) / (kDensePoints - 1) * (kControlPoints - 1);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(t), kControlPoints - 2);
    const double f = t - static_cast<double>(j);
    out[k] = arc.points[k] + ((1.0 - f) * control[j] + f * control[j + 1]);
  }
  return out;
}

ResampledFiber noisy_copy(const ResampledFiber& centroid, double sigma, Rng& rng) {
  ResampledFiber f = centroid;
  if (sigma > 0.0) {
    for (Point3& p : f) {
      p.x = static_cast<float>(p.x + sigma * rng.normal());
      p.y = static_cast<float>(p.y + sigma * rng.normal());
      p.z = static_cast<float>(p.z + sigma * rng.normal());
    }
    f = resample_fiber(f);
  }
  return rng.coin() ? reversed(f) : f;
}

std::string bundle_name(std::size_t b) {
  std::string digits = std::to_string(b);
  if (digits.size() < 3) {
    digits.insert(0, 3 - digits.size(), '0');
  }
  return "bundle_" + digits;
}

}  // namespace

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::index needs n > 0");
  }
  // Rejection keeps the draw unbiased: accept only below the largest multiple of n.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) {
      return x % n;
    }
  }
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SyntheticSpec::validate() const {
  if (bundle_count == 0 || centroids_per_bundle == 0) {
    throw InvalidInput("synthetic atlas needs at least one bundle and one centroid per bundle");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidInput("sigma must be finite and non-negative");
  }
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw InvalidInput("threshold must be finite and positive");
  }
  if (!(separation > 2.0 * threshold) || !std::isfinite(separation)) {
    throw InvalidInput("separation must exceed twice the threshold");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // Centroid points stay within sqrt(3) * delta of their prototype, so the
  // prototype bounding balls plus this margin bound every centroid.
  const double delta = 0.05 * spec.threshold;
  const double margin = std::sqrt(3.0) * delta;
  const double spacing = kMaxArcLength + spec.separation + 2.0 * margin;
  const double box = 1.75 * spacing * std::cbrt(static_cast<double>(spec.bundle_count));

  std::vector<Arc> prototypes;
  std::vector<Vec3> centers;
  for (std::size_t b = 0; b < spec.bundle_count; ++b) {
    const Arc arc = random_arc(rng);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Vec3 c{rng.uniform(0.0, box), rng.uniform(0.0, box), rng.uniform(0.0, box)};
      placed = true;
      for (std::size_t other = 0; other < prototypes.size() && placed; ++other) {
        placed = norm(c - centers[other]) >= arc.radius + prototypes[other].radius + spec.separation + 2.0 * margin;
      }
      if (placed) {
        prototypes.push_back(arc);
        centers.push_back(c);
      }
    }
    if (!placed) {
      throw InvalidInput("cannot place bundle " + std::to_string(b) + " with separation " +
                         std::to_string(spec.separation) + " mm");
    }
  }

  SyntheticData data;
  data.atlas.bundles.resize(spec.bundle_count);
  for (std::size_t b = 0; b < spec.bundle_count; ++b) {
    AtlasBundle& bundle = data.atlas.bundles[b];
    bundle.name = bundle_name(b);
    bundle.threshold = spec.threshold;
    bundle.centroids.reserve(spec.centroids_per_bundle);
    for (std::size_t k = 0; k < spec.centroids_per_bundle; ++k) {
      bundle.centroids.push_back(to_fiber(perturb(prototypes[b], delta, rng), centers[b]));
    }
  }

  const std::size_t members = spec.bundle_count * spec.fibers_per_bundle;
  data.fibers.reserve(members + spec.distractor_count);
  data.truth.reserve(members + spec.distractor_count);
  for (std::size_t b = 0; b < spec.bundle_count; ++b) {
    const auto& centroids = data.atlas.bundles[b].centroids;
    for (std::size_t i = 0; i < spec.fibers_per_bundle; ++i) {
      const ResampledFiber& c = centroids[rng.index(centroids.size())];
      data.fibers.push_back(noisy_copy(c, spec.sigma, rng));
      data.truth.push_back(static_cast<std::int32_t>(b));
    }
  }

  // Distractors keep at least `separation` between their points and every
  // centroid point, so every pair fails the threshold already on d_me.
  const double lo = -0.5 * spacing;
  const double hi = box + 0.5 * spacing;
  for (std::size_t d = 0; d < spec.distractor_count; ++d) {
    const Arc arc = random_arc(rng);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Vec3 c{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
      placed = true;
      for (std::size_t b = 0; b < prototypes.size() && placed; ++b) {
        placed = norm(c - centers[b]) >= arc.radius + prototypes[b].radius + spec.separation + margin;
      }
      if (placed) {
        data.fibers.push_back(rng.coin() ? reversed(to_fiber(arc.points, c)) : to_fiber(arc.points, c));
        data.truth.push_back(kDistractor);
      }
    }
    if (!placed) {
      throw InvalidInput("cannot place distractor " + std::to_string(d) + " with separation " +
                         std::to_string(spec.separation) + " mm");
    }
  }

  // Fisher-Yates with the portable index draw.
  for (std::size_t i = data.fibers.size(); i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(data.fibers[i - 1], data.fibers[j]);
    std::swap(data.truth[i - 1], data.truth[j]);
  }
  return data;
}

std::vector<ResampledFiber> sample_subject(const Atlas& atlas, std::size_t count, double sigma, std::uint64_t seed) {
  atlas.validate();
  Rng rng(seed);
  std::vector<ResampledFiber> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& centroids = atlas.bundles[rng.index(atlas.bundles.size())].centroids;
    out.push_back(noisy_copy(centroids[rng.index(centroids.size())], sigma, rng));
  }
  return out;
}

std::string format_truth(std::span<const std::int32_t> truth, const Atlas& atlas) {
  std::string out = "fiber_index,bundle_index,bundle_name\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(truth[i]) + ",";
    if (truth[i] != kDistractor) {
      out += atlas.bundles.at(static_cast<std::size_t>(truth[i])).name;
    }
    out += "\n";
  }
  return out;
}

}  // namespace fiberseg::validation
