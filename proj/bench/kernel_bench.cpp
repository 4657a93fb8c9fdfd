// Serial reference vs OpenMP segment vs brute-force oracle on one synthetic
// workload. Prints one CSV row per variant.
//
//   fiberseg_kernel_bench [fibers_per_bundle] [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "fiberseg/classifier.hpp"
#include "fiberseg/validation.hpp"

using namespace fiberseg;

template <typename F>
double time_it(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int main(int argc, char** argv) {
  validation::SyntheticSpec spec;
  spec.bundle_count = 20;
  spec.centroids_per_bundle = 50;
  spec.fibers_per_bundle = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 2000;
  spec.distractor_count = spec.fibers_per_bundle;
  spec.sigma = 0.5;
  spec.separation = 20.0;
  spec.threshold = 8.0;
  spec.seed = 7;
  const int threads = argc > 2 ? std::atoi(argv[2]) : 0;

  const validation::SyntheticData data = validation::generate_synthetic(spec);
  CascadeConfig cfg;
  cfg.worker_count = threads;
  const Segmenter segmenter(data.atlas, cfg);

  SegmentResult serial, parallel;
  std::vector<Assignment> oracle;
  const double t_serial = time_it([&] { serial = segmenter.segment_serial(data.fibers); });
  const double t_parallel = time_it([&] { parallel = segmenter.segment(data.fibers); });
  const double t_oracle =
      time_it([&] { oracle = validation::oracle_classify(data.fibers, data.atlas, validation::OracleMode::endpoint); });

  const bool same = serial.assignments == parallel.assignments &&
                    validation::compare_assignments(parallel.assignments, oracle).identical();
  std::printf("variant,fibers,centroids,seconds,pairs_per_second\n");
  const double pairs = static_cast<double>(data.fibers.size()) * static_cast<double>(data.atlas.centroid_count());
  std::printf("serial,%zu,%zu,%.4f,%.4g\n", data.fibers.size(), data.atlas.centroid_count(), t_serial, pairs / t_serial);
  std::printf("openmp,%zu,%zu,%.4f,%.4g\n", data.fibers.size(), data.atlas.centroid_count(), t_parallel,
              pairs / t_parallel);
  std::printf("oracle,%zu,%zu,%.4f,%.4g\n", data.fibers.size(), data.atlas.centroid_count(), t_oracle, pairs / t_oracle);
  std::printf("# outputs %s\n", same ? "identical" : "DIFFER");
  return same ? 0 : 1;
}
