#pragma once

// Reference oracles, synthetic data with ground truth, assignment comparison
// and the time/memory benchmark harness.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fiberseg/classifier.hpp"
#include "fiberseg/dataset_io.hpp"
#include "fiberseg/geometry.hpp"

namespace fiberseg::validation {

/// endpoint: orientation fixed by the endpoint rule, then one-orientation
/// maximum plus length penalty. exact: minimum over both orientations.
enum class OracleMode { endpoint, exact };

const char* to_string(OracleMode mode);

/// Score of one pair with no discarding stages.
double oracle_score(const ResampledFiber& a, const ResampledFiber& c, OracleMode mode);

/// Brute-force classification of every fiber against every centroid.
/// Single-threaded; tie-break matches the cascade.
std::vector<Assignment> oracle_classify(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                                        OracleMode mode);

struct DiscrepancyReport {
  std::uint64_t total = 0;
  std::uint64_t matching = 0;
  std::uint64_t label_mismatches = 0;
  std::uint64_t assignment_mismatches = 0;  // assigned in one, unassigned in the other
  double max_score_difference = 0.0;        // among matching assigned fibers

  std::uint64_t mismatches() const noexcept { return label_mismatches + assignment_mismatches; }
  bool identical() const noexcept { return mismatches() == 0 && max_score_difference == 0.0; }
  double mismatch_rate() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(mismatches()) / static_cast<double>(total);
  }
};

DiscrepancyReport compare_assignments(std::span<const Assignment> a, std::span<const Assignment> b);
std::string format_report(const DiscrepancyReport& report);

/// Pairs of fibers/centroids whose exact and endpoint-oracle outcomes differ.
struct DivergenceCheck {
  std::uint64_t fibers_examined = 0;
  std::uint64_t divergent_pairs = 0;
  /// Divergent pairs where an orientation fails the endpoint test. Always 0
  /// when the oracles are consistent with the cascade.
  std::uint64_t unexplained_pairs = 0;
};

/// Re-examines the fibers where the two assignments differ and checks that
/// every pair with differing outcomes passes the endpoint test in both
/// orientations.
DivergenceCheck explain_divergence(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                                   std::span<const Assignment> endpoint, std::span<const Assignment> exact);

/// Seeded source: std::mt19937_64 for raw bits with distribution transforms
/// defined here, so sequences do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n), unbiased.
  std::uint64_t index(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call).
  double normal();
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

inline constexpr std::int32_t kDistractor = -1;

struct SyntheticSpec {
  std::size_t bundle_count = 20;
  std::size_t centroids_per_bundle = 50;
  std::size_t fibers_per_bundle = 100;
  std::size_t distractor_count = 0;
  double sigma = 0.5;        // per-point member noise, mm
  double separation = 20.0;  // minimum gap between bundle regions, mm
  double threshold = 8.0;    // per-bundle acceptance threshold, mm
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  Atlas atlas;
  std::vector<ResampledFiber> fibers;
  /// Generating bundle per fiber, or kDistractor.
  std::vector<std::int32_t> truth;
};

/// Deterministic for a fixed spec. Throws InvalidInput when the requested
/// separation cannot be met.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// `count` fibers drawn from random centroids of `atlas` with per-point
/// Gaussian noise and random reversal.
std::vector<ResampledFiber> sample_subject(const Atlas& atlas, std::size_t count, double sigma, std::uint64_t seed);

std::string format_truth(std::span<const std::int32_t> truth, const Atlas& atlas);

struct BenchRow {
  std::size_t fibers = 0;
  int workers = 0;
  double seconds = 0.0;
  std::uint64_t peak_bytes = 0;
  double discard_t1 = 0.0;
  double discard_t2 = 0.0;
  double discard_t3 = 0.0;
  double discard_t4 = 0.0;
  double accepted = 0.0;
};

inline constexpr const char* kBenchHeader = "fibers,workers,seconds,peak_bytes,discard_t1,discard_t2,discard_t3,discard_t4,accepted";

std::string format_bench_row(const BenchRow& row);
BenchRow make_bench_row(std::size_t fibers, int workers, double seconds, std::uint64_t peak_bytes,
                        const CascadeStats& stats);

/// For each size, samples a subject from `atlas`, then times `segment` once
/// per worker count. Memory is the process peak resident size, reset before
/// each run; data generation happens outside the timed region.
std::vector<BenchRow> bench_run(std::span<const std::size_t> sizes, const Atlas& atlas, std::span<const int> workers,
                                double sigma, std::uint64_t seed, std::ostream* progress = nullptr);

/// Resets the kernel's peak-resident counter. Returns false when the
/// platform does not allow it, in which case the peak is monotonic.
bool reset_peak_resident();
std::uint64_t peak_resident_bytes();
std::uint64_t current_resident_bytes();
/// Returns freed heap pages to the OS where the allocator supports it.
void release_free_memory();

}  // namespace fiberseg::validation
