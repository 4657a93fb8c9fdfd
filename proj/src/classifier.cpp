#include "fiberseg/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fiberseg {

#pragma omp declare reduction(cascade_sum : CascadeStats : omp_out += omp_in) initializer(omp_priv = CascadeStats{})

namespace {

struct EndpointMaxima {
  double direct2;
  double inverse2;
};

inline EndpointMaxima endpoint_maxima(const ResampledFiber& a, const ResampledFiber& c) noexcept {
  return {std::max(squared_distance(a[0], c[0]), squared_distance(a[kLastIndex], c[kLastIndex])),
          std::max(squared_distance(a[0], c[kLastIndex]), squared_distance(a[kLastIndex], c[0]))};
}

// Compared as distances, not squares, so the tie rule matches the definition
// on unsquared endpoint maxima.
inline Orientation pick_orientation(const EndpointMaxima& m) noexcept {
  return std::sqrt(m.inverse2) < std::sqrt(m.direct2) ? Orientation::inverse : Orientation::direct;
}

inline bool four_points_exceed(const ResampledFiber& a, const ResampledFiber& c, Orientation o,
                               const DistanceBound& bound, const CascadeConfig& cfg) noexcept {
  for (std::size_t i : cfg.test3_indices) {
    if (bound.exceeded(squared_distance(a[i], c[paired_index(i, o)]))) {
      return true;
    }
  }
  return false;
}

// Largest squared pointwise distance, or a negative value once the bound is
// exceeded.
inline double full_max_squared(const ResampledFiber& a, const ResampledFiber& c, Orientation o,
                               const DistanceBound& bound) noexcept {
  double worst = 0.0;
  for (std::size_t i = 0; i < kResampledPoints; ++i) {
    const double d2 = squared_distance(a[i], c[paired_index(i, o)]);
    if (bound.exceeded(d2)) {
      return -1.0;
    }
    worst = std::max(worst, d2);
  }
  return worst;
}

// Stages 2..4; stage 1 has already passed.
inline PairOutcome evaluate_after_center(const ResampledFiber& a, double length_a, const ResampledFiber& c,
                                         double length_c, const DistanceBound& bound,
                                         const CascadeConfig& cfg) {
  PairOutcome out;
  const EndpointMaxima ends = endpoint_maxima(a, c);
  if (bound.exceeded(std::min(ends.direct2, ends.inverse2))) {
    out.stage = Stage::test2;
    return out;
  }
  out.orientation = pick_orientation(ends);
  if (four_points_exceed(a, c, out.orientation, bound, cfg)) {
    out.stage = Stage::test3;
    return out;
  }
  const double worst2 = full_max_squared(a, c, out.orientation, bound);
  if (worst2 < 0.0) {
    out.stage = Stage::test4_dme;
    return out;
  }
  const double score = std::sqrt(worst2) + tn(length_a, length_c);
  if (score > bound.limit()) {
    out.stage = Stage::test4_tn;
    return out;
  }
  out.stage = Stage::accepted;
  out.score = score;
  return out;
}

inline void count_outcome(CascadeStats& s, Stage stage) noexcept {
  switch (stage) {
    case Stage::test1: ++s.discarded_test1; break;
    case Stage::test2: ++s.discarded_test2; break;
    case Stage::test3: ++s.discarded_test3; break;
    case Stage::test4_dme: ++s.discarded_test4_dme; break;
    case Stage::test4_tn: ++s.discarded_test4_tn; break;
    case Stage::accepted: ++s.accepted; break;
  }
}

}  // namespace

void CascadeConfig::validate() const {
  for (std::size_t k = 0; k < test3_indices.size(); ++k) {
    const std::size_t i = test3_indices[k];
    if (i < 1 || i > kLastIndex - 1 || i == kCenterIndex) {
      throw InvalidInput("test3 index " + std::to_string(i) + " must lie in 1..19 and differ from 10");
    }
    if (k > 0 && i <= test3_indices[k - 1]) {
      throw InvalidInput("test3 indices must be strictly increasing");
    }
  }
  for (std::size_t i : test3_indices) {
    if (std::find(test3_indices.begin(), test3_indices.end(), kLastIndex - i) == test3_indices.end()) {
      throw InvalidInput("test3 indices must be symmetric under i -> 20 - i");
    }
  }
  if (worker_count < 0) {
    throw InvalidInput("worker count must be positive (or 0 for auto)");
  }
}

void CascadeStats::record(Stage stage) noexcept {
  ++pairs_total;
  count_outcome(*this, stage);
}

CascadeStats& CascadeStats::operator+=(const CascadeStats& o) noexcept {
  pairs_total += o.pairs_total;
  discarded_test1 += o.discarded_test1;
  discarded_test2 += o.discarded_test2;
  discarded_test3 += o.discarded_test3;
  discarded_test4_dme += o.discarded_test4_dme;
  discarded_test4_tn += o.discarded_test4_tn;
  accepted += o.accepted;
  return *this;
}

std::uint64_t CascadeStats::outcomes() const noexcept {
  return discarded_test1 + discarded_test2 + discarded_test3 + discarded_test4_dme + discarded_test4_tn + accepted;
}

Orientation infer_orientation(const ResampledFiber& a, const ResampledFiber& c) {
  return pick_orientation(endpoint_maxima(a, c));
}

Verdict test_center(const ResampledFiber& a, const ResampledFiber& c, double threshold) {
  const DistanceBound bound(threshold);
  return bound.exceeded(squared_distance(a[kCenterIndex], c[kCenterIndex])) ? Verdict::discard : Verdict::keep;
}

EndpointVerdict test_endpoints(const ResampledFiber& a, const ResampledFiber& c, double threshold) {
  const DistanceBound bound(threshold);
  const EndpointMaxima ends = endpoint_maxima(a, c);
  if (bound.exceeded(std::min(ends.direct2, ends.inverse2))) {
    return {Verdict::discard, Orientation::direct};
  }
  return {Verdict::keep, pick_orientation(ends)};
}

Verdict test_four_points(const ResampledFiber& a, const ResampledFiber& c, Orientation orientation,
                         double threshold, const CascadeConfig& cfg) {
  return four_points_exceed(a, c, orientation, DistanceBound(threshold), cfg) ? Verdict::discard : Verdict::keep;
}

std::optional<double> test_full(const ResampledFiber& a, const ResampledFiber& c, Orientation orientation,
                                double threshold) {
  const DistanceBound bound(threshold);
  const double worst2 = full_max_squared(a, c, orientation, bound);
  if (worst2 < 0.0) {
    return std::nullopt;
  }
  const double score = std::sqrt(worst2) + tn(polyline_length(a), polyline_length(c));
  if (score > threshold) {
    return std::nullopt;
  }
  return score;
}

PairOutcome evaluate_pair(const ResampledFiber& a, double length_a, const ResampledFiber& c, double length_c,
                          const DistanceBound& threshold, const CascadeConfig& cfg) {
  if (threshold.exceeded(squared_distance(a[kCenterIndex], c[kCenterIndex]))) {
    return PairOutcome{Stage::test1, Orientation::direct, 0.0};
  }
  return evaluate_after_center(a, length_a, c, length_c, threshold, cfg);
}

Segmenter::Segmenter(const Atlas& atlas, CascadeConfig cfg) : atlas_(&atlas), cfg_(cfg) {
  atlas.validate();
  cfg_.validate();
  const std::size_t m = atlas.centroid_count();
  centroids_.reserve(m);
  centers_.reserve(m);
  lengths_.reserve(m);
  ranges_.reserve(atlas.bundles.size());
  for (const AtlasBundle& b : atlas.bundles) {
    ranges_.push_back(BundleRange{centroids_.size(), b.centroids.size(), DistanceBound(b.threshold)});
    for (const ResampledFiber& c : b.centroids) {
      centroids_.push_back(&c);
      centers_.push_back(c[kCenterIndex]);
      lengths_.push_back(polyline_length(c));
    }
  }
}

Assignment Segmenter::classify(const ResampledFiber& fiber, CascadeStats& stats) const {
  const double length = polyline_length(fiber);
  const Point3 center = fiber[kCenterIndex];
  Assignment best;
  for (std::size_t b = 0; b < ranges_.size(); ++b) {
    const BundleRange& range = ranges_[b];
    const std::size_t end = range.first + range.count;
    stats.pairs_total += range.count;
    for (std::size_t k = range.first; k < end; ++k) {
      if (range.bound.exceeded(squared_distance(center, centers_[k]))) {
        ++stats.discarded_test1;
        continue;
      }
      const PairOutcome out =
          evaluate_after_center(fiber, length, *centroids_[k], lengths_[k], range.bound, cfg_);
      count_outcome(stats, out.stage);
      // Strict '<' keeps the first of equal scores: lowest bundle, then centroid.
      if (out.stage == Stage::accepted && out.score < best.distance) {
        best.bundle = static_cast<std::int32_t>(b);
        best.centroid = static_cast<std::int32_t>(k - range.first);
        best.distance = out.score;
      }
    }
  }
  return best;
}

SegmentResult Segmenter::segment(std::span<const ResampledFiber> fibers) const {
  SegmentResult result;
  result.assignments.resize(fibers.size());
  CascadeStats stats;
  const auto n = static_cast<std::int64_t>(fibers.size());
#ifdef _OPENMP
  const int workers = cfg_.worker_count > 0 ? cfg_.worker_count : omp_get_max_threads();
#else
  const int workers = 1;
#endif
  // Each iteration writes only its own slot; the counters are summed per
  // worker and reduced afterwards.
#pragma omp parallel for schedule(dynamic, 64) num_threads(workers) reduction(cascade_sum : stats)
  for (std::int64_t i = 0; i < n; ++i) {
    result.assignments[static_cast<std::size_t>(i)] = classify(fibers[static_cast<std::size_t>(i)], stats);
  }
  (void)workers;
  result.stats = stats;
  return result;
}

SegmentResult Segmenter::segment_serial(std::span<const ResampledFiber> fibers) const {
  SegmentResult result;
  result.assignments.reserve(fibers.size());
  for (const ResampledFiber& f : fibers) {
    result.assignments.push_back(classify(f, result.stats));
  }
  return result;
}

Assignment classify_fiber(const ResampledFiber& fiber, const Atlas& atlas, const CascadeConfig& cfg,
                          CascadeStats* stats) {
  CascadeStats local;
  const Assignment a = Segmenter(atlas, cfg).classify(fiber, local);
  if (stats != nullptr) {
    *stats += local;
  }
  return a;
}

SegmentResult segment(std::span<const ResampledFiber> fibers, const Atlas& atlas, const CascadeConfig& cfg) {
  return Segmenter(atlas, cfg).segment(fibers);
}

SegmentResult segment_serial(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                             const CascadeConfig& cfg) {
  return Segmenter(atlas, cfg).segment_serial(fibers);
}

}  // namespace fiberseg
