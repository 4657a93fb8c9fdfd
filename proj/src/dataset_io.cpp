#include "fiberseg/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace fiberseg {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'I', 'B', 'R'};
constexpr std::size_t kPointBytes = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failed on '" + path.string() + "'");
  }
  return bytes;
}

void write_bytes(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out.write(data, static_cast<std::streamsize>(size));
  out.flush();
  if (!out) {
    throw IoError("write failed on '" + path.string() + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create directory '" + dir.string() + "'");
  }
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) {
    tokens.push_back(tok);
  }
  return tokens;
}

std::vector<std::string> split_char(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(const std::string& text, T& value) {
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

FormatError::FormatError(Kind kind, std::uint64_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at byte offset " + std::to_string(offset) +
                         ": " + detail),
      kind_(kind),
      offset_(offset) {}

const char* to_string(FormatError::Kind kind) {
  switch (kind) {
    case FormatError::Kind::bad_magic: return "bad magic";
    case FormatError::Kind::unsupported_version: return "unsupported version";
    case FormatError::Kind::truncated: return "truncated payload";
    case FormatError::Kind::too_few_points: return "too few points";
    case FormatError::Kind::non_finite: return "non-finite coordinate";
    case FormatError::Kind::trailing_bytes: return "trailing bytes";
  }
  return "format error";
}

void FiberDataset::add(std::span<const Point3> points) {
  if (points.size() < 2) {
    throw InvalidInput("fiber needs at least 2 points, got " + std::to_string(points.size()));
  }
  if (!std::all_of(points.begin(), points.end(), [](const Point3& p) { return is_finite(p); })) {
    throw InvalidInput("fiber has a non-finite coordinate");
  }
  points_.insert(points_.end(), points.begin(), points.end());
  offsets_.push_back(points_.size());
}

void FiberDataset::reserve(std::size_t fibers, std::size_t points) {
  offsets_.reserve(fibers + 1);
  points_.reserve(points);
}

FiberDataset to_dataset(std::span<const ResampledFiber> fibers) {
  FiberDataset out;
  out.reserve(fibers.size(), fibers.size() * kResampledPoints);
  for (const ResampledFiber& f : fibers) {
    out.add(f);
  }
  return out;
}

std::vector<ResampledFiber> resample_dataset(const FiberDataset& dataset) {
  std::vector<ResampledFiber> out(dataset.size());
  const auto n = static_cast<std::int64_t>(dataset.size());
  // Exceptions cannot cross the parallel region; remember the first failure.
  std::int64_t failed = -1;
  std::string message;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto fiber = dataset.fiber(static_cast<std::size_t>(i));
    try {
      if (fiber.size() == kResampledPoints) {
        polyline_length(fiber);
        std::copy(fiber.begin(), fiber.end(), out[static_cast<std::size_t>(i)].begin());
      } else {
        out[static_cast<std::size_t>(i)] = resample_fiber(fiber);
      }
    } catch (const InvalidInput& e) {
#pragma omp critical(fiberseg_resample_error)
      if (failed < 0 || i < failed) {
        failed = i;
        message = e.what();
      }
    }
  }
  if (failed >= 0) {
    throw InvalidInput("fiber " + std::to_string(failed) + ": " + message);
  }
  return out;
}

std::vector<std::uint8_t> encode_fibr(const FiberDataset& dataset) {
  if (dataset.empty()) {
    throw InvalidInput("refusing to encode an empty fiber dataset");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFibrHeaderBytes + dataset.size() * 4 + dataset.total_points() * kPointBytes);
  for (std::uint8_t b : kMagic) {
    out.push_back(b);
  }
  put_u32(out, kFibrVersion);
  put_u32(out, static_cast<std::uint32_t>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto fiber = dataset.fiber(i);
    put_u32(out, static_cast<std::uint32_t>(fiber.size()));
    for (const Point3& p : fiber) {
      put_f32(out, p.x);
      put_f32(out, p.y);
      put_f32(out, p.z);
    }
  }
  return out;
}

FiberDataset decode_fibr(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  const std::size_t size = bytes.size();
  const std::size_t magic_len = std::min<std::size_t>(size, 4);
  if (magic_len > 0 && std::memcmp(bytes.data(), kMagic, magic_len) != 0) {
    throw FormatError(Kind::bad_magic, 0, "expected 'FIBR'");
  }
  if (size < kFibrHeaderBytes) {
    throw FormatError(Kind::truncated, 0, "header needs 12 bytes, file has " + std::to_string(size));
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFibrVersion) {
    throw FormatError(Kind::unsupported_version, 4, "version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(bytes.data() + 8);

  FiberDataset out;
  // Header counts are untrusted; bound the reservation by what the payload can hold.
  const std::size_t max_fibers = (size - kFibrHeaderBytes) / (4 + 2 * kPointBytes);
  out.reserve(std::min<std::size_t>(count, max_fibers), (size - kFibrHeaderBytes) / kPointBytes);

  std::vector<Point3> points;
  std::size_t offset = kFibrHeaderBytes;
  for (std::uint32_t f = 0; f < count; ++f) {
    const std::size_t record = offset;
    if (size - offset < 4) {
      throw FormatError(Kind::truncated, record, "fiber " + std::to_string(f) + " point count missing");
    }
    const std::uint32_t n = get_u32(bytes.data() + offset);
    if (n < 2) {
      throw FormatError(Kind::too_few_points, record,
                        "fiber " + std::to_string(f) + " has " + std::to_string(n) + " point(s)");
    }
    offset += 4;
    if ((size - offset) / kPointBytes < n) {
      throw FormatError(Kind::truncated, record,
                        "fiber " + std::to_string(f) + " declares " + std::to_string(n) + " points");
    }
    points.resize(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      const std::uint8_t* p = bytes.data() + offset;
      points[k] = Point3{get_f32(p), get_f32(p + 4), get_f32(p + 8)};
      if (!is_finite(points[k])) {
        throw FormatError(Kind::non_finite, offset,
                          "fiber " + std::to_string(f) + " point " + std::to_string(k));
      }
      offset += kPointBytes;
    }
    out.add(points);
  }
  if (offset != size) {
    throw FormatError(Kind::trailing_bytes, offset, std::to_string(size - offset) + " unread byte(s)");
  }
  return out;
}

FiberDataset read_fiber_file(const std::filesystem::path& path) {
  FiberDataset out = decode_fibr(read_bytes(path));
  out.source_path = path.string();
  return out;
}

void write_fiber_file(const FiberDataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_fibr(dataset);
  write_bytes(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::size_t Atlas::centroid_count() const noexcept {
  std::size_t total = 0;
  for (const AtlasBundle& b : bundles) {
    total += b.centroids.size();
  }
  return total;
}

void Atlas::validate() const {
  if (bundles.empty()) {
    throw AtlasError("atlas has no bundles");
  }
  std::set<std::string> names;
  for (const AtlasBundle& b : bundles) {
    if (b.name.empty() || b.name.find_first_of("/\\ \t,") != std::string::npos) {
      throw AtlasError("invalid bundle name '" + b.name + "'");
    }
    if (!names.insert(b.name).second) {
      throw AtlasError("duplicate bundle name '" + b.name + "'");
    }
    if (!(b.threshold > 0.0) || !std::isfinite(b.threshold)) {
      throw AtlasError("bundle '" + b.name + "' threshold must be finite and positive");
    }
    if (b.centroids.empty()) {
      throw AtlasError("bundle '" + b.name + "' has no centroids");
    }
  }
}

Atlas load_atlas(const std::filesystem::path& dir) {
  const std::filesystem::path manifest = dir / kManifestName;
  if (!std::filesystem::is_regular_file(manifest)) {
    throw AtlasError("missing atlas manifest '" + manifest.string() + "'");
  }
  std::istringstream lines(read_text(manifest));
  Atlas atlas;
  std::set<std::string> names;
  int line_no = 0;
  for (std::string line; std::getline(lines, line);) {
    ++line_no;
    const std::vector<std::string> tok = split_whitespace(line);
    if (tok.empty() || tok[0].front() == '#') {
      continue;
    }
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (tok.size() != 3) {
      throw AtlasError(where + ": expected '<bundle_name> <threshold_mm> <centroid_file>'");
    }
    AtlasBundle bundle;
    bundle.name = tok[0];
    if (!names.insert(bundle.name).second) {
      throw AtlasError(where + ": duplicate bundle name '" + bundle.name + "'");
    }
    if (!parse_number(tok[1], bundle.threshold) || !(bundle.threshold > 0.0) ||
        !std::isfinite(bundle.threshold)) {
      throw AtlasError(where + ": bundle '" + bundle.name + "' threshold '" + tok[1] +
                       "' is not a positive number");
    }
    FiberDataset centroids;
    try {
      centroids = read_fiber_file(dir / tok[2]);
    } catch (const std::exception& e) {
      throw AtlasError(where + ": bundle '" + bundle.name + "': " + e.what());
    }
    bundle.centroids.reserve(centroids.size());
    for (std::size_t i = 0; i < centroids.size(); ++i) {
      const auto pts = centroids.fiber(i);
      if (pts.size() != kResampledPoints) {
        throw AtlasError(where + ": bundle '" + bundle.name + "' centroid " + std::to_string(i) + " has " +
                         std::to_string(pts.size()) + " points, expected 21");
      }
      try {
        polyline_length(pts);
      } catch (const InvalidInput& e) {
        throw AtlasError(where + ": bundle '" + bundle.name + "' centroid " + std::to_string(i) + ": " +
                         e.what());
      }
      ResampledFiber f;
      std::copy(pts.begin(), pts.end(), f.begin());
      bundle.centroids.push_back(f);
    }
    atlas.bundles.push_back(std::move(bundle));
  }
  atlas.validate();
  return atlas;
}

void write_atlas(const Atlas& atlas, const std::filesystem::path& dir) {
  atlas.validate();
  ensure_directory(dir / "centroids");
  std::string manifest = "# bundle_name threshold_mm centroid_file\n";
  for (const AtlasBundle& b : atlas.bundles) {
    const std::string rel = "centroids/" + b.name + ".fib";
    write_fiber_file(to_dataset(b.centroids), dir / rel);
    manifest += b.name + " " + shortest(b.threshold) + " " + rel + "\n";
  }
  write_text(dir / kManifestName, manifest);
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

std::string format_assignments(std::span<const Assignment> assignments, const Atlas& atlas) {
  std::string out = "fiber_index,bundle_index,bundle_name,distance\n";
  out.reserve(out.size() + assignments.size() * 24);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const Assignment& a = assignments[i];
    out += std::to_string(i);
    if (a.assigned()) {
      out += ',';
      out += std::to_string(a.bundle);
      out += ',';
      out += atlas.bundles.at(static_cast<std::size_t>(a.bundle)).name;
      out += ',';
      out += format_score(a.distance);
      out += '\n';
    } else {
      out += ",-1,,\n";
    }
  }
  return out;
}

void write_assignments(std::span<const Assignment> assignments, const Atlas& atlas,
                       const std::filesystem::path& path) {
  write_text(path, format_assignments(assignments, atlas));
}

std::vector<Assignment> parse_assignments(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line) || line != "fiber_index,bundle_index,bundle_name,distance") {
    throw InvalidInput("assignment CSV: unexpected header");
  }
  std::vector<Assignment> out;
  for (std::size_t row = 0; std::getline(lines, line); ++row) {
    const std::vector<std::string> f = split_char(line, ',');
    const std::string where = "assignment CSV row " + std::to_string(row + 1);
    std::size_t index = 0;
    if (f.size() != 4 || !parse_number(f[0], index)) {
      throw InvalidInput(where + ": malformed");
    }
    if (index != row) {
      throw InvalidInput(where + ": fiber_index " + f[0] + " out of order");
    }
    Assignment a;
    if (!parse_number(f[1], a.bundle) || a.bundle < kUnassigned) {
      throw InvalidInput(where + ": bad bundle_index '" + f[1] + "'");
    }
    if (a.assigned() && !parse_number(f[3], a.distance)) {
      throw InvalidInput(where + ": bad distance '" + f[3] + "'");
    }
    out.push_back(a);
  }
  return out;
}

std::vector<Assignment> read_assignments(const std::filesystem::path& path) {
  return parse_assignments(read_text(path));
}

void write_segmented_bundles(const FiberDataset& dataset, std::span<const Assignment> assignments,
                             const Atlas& atlas, const std::filesystem::path& out_dir) {
  if (assignments.size() != dataset.size()) {
    throw InvalidInput("assignment count does not match dataset size");
  }
  std::vector<std::vector<std::size_t>> members(atlas.bundles.size());
  std::size_t unassigned = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i].assigned()) {
      members.at(static_cast<std::size_t>(assignments[i].bundle)).push_back(i);
    } else {
      ++unassigned;
    }
  }
  ensure_directory(out_dir);
  std::string summary = "# bundle_name fiber_count\n";
  for (std::size_t b = 0; b < atlas.bundles.size(); ++b) {
    const std::string& name = atlas.bundles[b].name;
    summary += name + " " + std::to_string(members[b].size()) + "\n";
    if (members[b].empty()) {
      continue;
    }
    FiberDataset subset;
    for (std::size_t i : members[b]) {
      subset.add(dataset.fiber(i));
    }
    write_fiber_file(subset, out_dir / (name + ".fib"));
  }
  summary += "unassigned " + std::to_string(unassigned) + "\n";
  summary += "total " + std::to_string(dataset.size()) + "\n";
  write_text(out_dir / "summary.txt", summary);
}

}  // namespace fiberseg
