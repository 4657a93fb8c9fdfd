#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "fiberseg/validation.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#if defined(__unix__) || defined(__APPLE__)
#include <sys/resource.h>
#endif

namespace fiberseg::validation {
namespace {

// Reads a "<key>: <n> kB" field of /proc/self/status; 0 when unavailable.
std::uint64_t proc_status_kb(const std::string& key) {
  std::ifstream in("/proc/self/status");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(key + ":", 0) == 0) {
      std::istringstream fields(line.substr(key.size() + 1));
      std::uint64_t kb = 0;
      fields >> kb;
      return kb;
    }
  }
  return 0;
}

double fraction(std::uint64_t part, std::uint64_t total) {
  return total == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(total);
}

}  // namespace

bool reset_peak_resident() {
  std::ofstream out("/proc/self/clear_refs");
  if (!out) {
    return false;
  }
  out << "5";
  out.flush();
  return static_cast<bool>(out);
}

std::uint64_t peak_resident_bytes() {
  if (const std::uint64_t kb = proc_status_kb("VmHWM"); kb > 0) {
    return kb * 1024;
  }
#if defined(__unix__) || defined(__APPLE__)
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) == 0) {
#if defined(__APPLE__)
    return static_cast<std::uint64_t>(usage.ru_maxrss);
#else
    return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
#endif
  }
#endif
  return 0;
}

std::uint64_t current_resident_bytes() { return proc_status_kb("VmRSS") * 1024; }

void release_free_memory() {
#if defined(__GLIBC__)
  malloc_trim(0);
#endif
}

BenchRow make_bench_row(std::size_t fibers, int workers, double seconds, std::uint64_t peak_bytes,
                        const CascadeStats& stats) {
  BenchRow row;
  row.fibers = fibers;
  row.workers = workers;
  row.seconds = seconds;
  row.peak_bytes = peak_bytes;
  row.discard_t1 = fraction(stats.discarded_test1, stats.pairs_total);
  row.discard_t2 = fraction(stats.discarded_test2, stats.pairs_total);
  row.discard_t3 = fraction(stats.discarded_test3, stats.pairs_total);
  row.discard_t4 = fraction(stats.discarded_test4_dme + stats.discarded_test4_tn, stats.pairs_total);
  row.accepted = fraction(stats.accepted, stats.pairs_total);
  return row;
}

std::string format_bench_row(const BenchRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%llu,%.6f,%.6f,%.6f,%.6f,%.6f", r.fibers, r.workers, r.seconds,
                static_cast<unsigned long long>(r.peak_bytes), r.discard_t1, r.discard_t2, r.discard_t3,
                r.discard_t4, r.accepted);
  return buf;
}

std::vector<BenchRow> bench_run(std::span<const std::size_t> sizes, const Atlas& atlas, std::span<const int> workers,
                                double sigma, std::uint64_t seed, std::ostream* progress) {
  std::vector<BenchRow> rows;
  for (std::size_t n : sizes) {
    release_free_memory();
    const std::vector<ResampledFiber> fibers = sample_subject(atlas, n, sigma, seed);
    for (int w : workers) {
      CascadeConfig cfg;
      cfg.worker_count = w;
      const Segmenter segmenter(atlas, cfg);
      release_free_memory();
      reset_peak_resident();
      const auto start = std::chrono::steady_clock::now();
      SegmentResult result = segmenter.segment(fibers);
      const auto stop = std::chrono::steady_clock::now();
      const std::uint64_t peak = peak_resident_bytes();
      const double seconds = std::chrono::duration<double>(stop - start).count();
      rows.push_back(make_bench_row(n, w, seconds, peak, result.stats));
      if (progress != nullptr) {
        *progress << format_bench_row(rows.back()) << std::endl;
      }
    }
  }
  return rows;
}

}  // namespace fiberseg::validation
