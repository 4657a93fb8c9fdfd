#pragma once

// Atlas-based fiber segmentation with a four-stage discard cascade.
//
// Each (fiber, centroid) pair goes through
//   test1  center point (index 10, self-paired in both orientations)
//   test2  endpoints in both orientations; the smaller maximum fixes the
//          orientation used by the remaining stages
//   test3  four intermediate points in the fixed orientation
//   test4  all 21 points, then the length penalty
// and is discarded at the first stage where a distance exceeds the bundle
// threshold. A fiber is labelled with the bundle of its best accepted score.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fiberseg/dataset_io.hpp"
#include "fiberseg/geometry.hpp"

namespace fiberseg {

struct CascadeConfig {
  std::array<std::size_t, 4> test3_indices{3, 7, 13, 17};
  /// 0 selects the OpenMP default.
  int worker_count = 0;

  /// Throws InvalidInput unless the indices are strictly increasing, lie in
  /// 1..19 without 10, and map onto themselves under i -> 20 - i.
  void validate() const;
};

enum class Stage : std::uint8_t { test1, test2, test3, test4_dme, test4_tn, accepted };

struct CascadeStats {
  std::uint64_t pairs_total = 0;
  std::uint64_t discarded_test1 = 0;
  std::uint64_t discarded_test2 = 0;
  std::uint64_t discarded_test3 = 0;
  std::uint64_t discarded_test4_dme = 0;
  std::uint64_t discarded_test4_tn = 0;
  std::uint64_t accepted = 0;

  void record(Stage stage) noexcept;
  CascadeStats& operator+=(const CascadeStats& other) noexcept;
  std::uint64_t outcomes() const noexcept;
  bool consistent() const noexcept { return outcomes() == pairs_total; }

  friend bool operator==(const CascadeStats&, const CascadeStats&) = default;
};

enum class Verdict : std::uint8_t { keep, discard };

struct EndpointVerdict {
  Verdict verdict = Verdict::keep;
  Orientation orientation = Orientation::direct;
};

/// Orientation with the smaller endpoint maximum; ties go to direct.
Orientation infer_orientation(const ResampledFiber& a, const ResampledFiber& c);

Verdict test_center(const ResampledFiber& a, const ResampledFiber& c, double threshold);
EndpointVerdict test_endpoints(const ResampledFiber& a, const ResampledFiber& c, double threshold);
Verdict test_four_points(const ResampledFiber& a, const ResampledFiber& c, Orientation orientation,
                         double threshold, const CascadeConfig& cfg = {});
/// Full score in one orientation, or nullopt when it exceeds the threshold.
std::optional<double> test_full(const ResampledFiber& a, const ResampledFiber& c, Orientation orientation,
                                double threshold);

struct PairOutcome {
  Stage stage = Stage::test1;
  Orientation orientation = Orientation::direct;
  /// Valid only when stage == accepted.
  double score = 0.0;
};

/// Runs the whole cascade for one pair. Lengths are the 21-point polyline
/// lengths of the two fibers.
PairOutcome evaluate_pair(const ResampledFiber& a, double length_a, const ResampledFiber& c, double length_c,
                          const DistanceBound& threshold, const CascadeConfig& cfg = {});

struct SegmentResult {
  std::vector<Assignment> assignments;
  CascadeStats stats;
};

/// Atlas prepared for repeated classification: per-centroid lengths, bundle
/// bounds and a packed copy of the centroid center points.
class Segmenter {
 public:
  Segmenter(const Atlas& atlas, CascadeConfig cfg = {});

  const Atlas& atlas() const noexcept { return *atlas_; }
  const CascadeConfig& config() const noexcept { return cfg_; }

  Assignment classify(const ResampledFiber& fiber, CascadeStats& stats) const;

  /// OpenMP over fibers. Output is independent of the worker count.
  SegmentResult segment(std::span<const ResampledFiber> fibers) const;
  /// Single-threaded reference for the same computation.
  SegmentResult segment_serial(std::span<const ResampledFiber> fibers) const;

 private:
  struct BundleRange {
    std::size_t first;
    std::size_t count;
    DistanceBound bound;
  };

  const Atlas* atlas_;
  CascadeConfig cfg_;
  std::vector<BundleRange> ranges_;
  std::vector<const ResampledFiber*> centroids_;
  std::vector<Point3> centers_;
  std::vector<double> lengths_;
};

Assignment classify_fiber(const ResampledFiber& fiber, const Atlas& atlas, const CascadeConfig& cfg = {},
                          CascadeStats* stats = nullptr);

SegmentResult segment(std::span<const ResampledFiber> fibers, const Atlas& atlas, const CascadeConfig& cfg = {});
SegmentResult segment_serial(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                             const CascadeConfig& cfg = {});

}  // namespace fiberseg
