#pragma once

// FIBR fiber files, atlas directories and assignment CSVs.
//
// FIBR layout (little-endian):
//   "FIBR" | u32 version = 1 | u32 fiber count |
//   per fiber: u32 point count (>= 2) | count * (f32 x, f32 y, f32 z)

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fiberseg/geometry.hpp"

namespace fiberseg {

inline constexpr std::uint32_t kFibrVersion = 1;
inline constexpr std::size_t kFibrHeaderBytes = 12;

/// Read/write failure at the filesystem level.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed FIBR content.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, too_few_points, non_finite, trailing_bytes };

  FormatError(Kind kind, std::uint64_t offset, const std::string& detail);

  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

const char* to_string(FormatError::Kind kind);

/// Malformed atlas directory or manifest.
class AtlasError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Variable-length fibers in one flat point buffer.
class FiberDataset {
 public:
  FiberDataset() = default;

  /// Appends a fiber; throws InvalidInput for < 2 points or non-finite values.
  void add(std::span<const Point3> points);
  void reserve(std::size_t fibers, std::size_t points);

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  bool empty() const noexcept { return size() == 0; }
  std::size_t total_points() const noexcept { return points_.size(); }

  std::span<const Point3> fiber(std::size_t i) const {
    return {points_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  std::string source_path;

  friend bool operator==(const FiberDataset& a, const FiberDataset& b) {
    return a.offsets_ == b.offsets_ && a.points_ == b.points_;
  }

 private:
  std::vector<Point3> points_;
  std::vector<std::size_t> offsets_{0};
};

FiberDataset to_dataset(std::span<const ResampledFiber> fibers);

/// Resamples every fiber to 21 points; fibers that already have 21 points
/// are taken as-is.
std::vector<ResampledFiber> resample_dataset(const FiberDataset& dataset);

std::vector<std::uint8_t> encode_fibr(const FiberDataset& dataset);
FiberDataset decode_fibr(std::span<const std::uint8_t> bytes);

FiberDataset read_fiber_file(const std::filesystem::path& path);
void write_fiber_file(const FiberDataset& dataset, const std::filesystem::path& path);

struct AtlasBundle {
  std::string name;
  double threshold = 0.0;
  std::vector<ResampledFiber> centroids;
};

struct Atlas {
  std::vector<AtlasBundle> bundles;

  std::size_t centroid_count() const noexcept;
  /// Throws AtlasError when an invariant is violated.
  void validate() const;
};

inline constexpr const char* kManifestName = "bundles.txt";

/// Loads `<dir>/bundles.txt`: `<name> <threshold_mm> <relative_centroid_file>`
/// per line, `#` comments.
Atlas load_atlas(const std::filesystem::path& dir);

/// Writes one FIBR file per bundle plus the manifest.
void write_atlas(const Atlas& atlas, const std::filesystem::path& dir);

inline constexpr std::int32_t kUnassigned = -1;

struct Assignment {
  std::int32_t bundle = kUnassigned;
  std::int32_t centroid = -1;
  double distance = std::numeric_limits<double>::infinity();

  bool assigned() const noexcept { return bundle != kUnassigned; }
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

std::string format_assignments(std::span<const Assignment> assignments, const Atlas& atlas);
void write_assignments(std::span<const Assignment> assignments, const Atlas& atlas,
                       const std::filesystem::path& path);
/// Parses an assignment CSV. Centroid indices are not stored in the file
/// and come back as -1.
std::vector<Assignment> read_assignments(const std::filesystem::path& path);
std::vector<Assignment> parse_assignments(const std::string& text);

/// Writes `<out_dir>/<bundle>.fib` for every bundle with at least one fiber
/// and `<out_dir>/summary.txt` with per-bundle counts.
void write_segmented_bundles(const FiberDataset& dataset, std::span<const Assignment> assignments,
                             const Atlas& atlas, const std::filesystem::path& out_dir);

/// Six significant digits, the precision used in CSVs and reports.
std::string format_score(double value);

}  // namespace fiberseg
