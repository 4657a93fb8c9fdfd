#include <doctest.h>

#include <set>
#include <sstream>

#include "fiberseg/validation.hpp"
#include "test_support.hpp"

using namespace fiberseg;
using namespace fiberseg::testing;
using namespace fiberseg::validation;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.bundle_count = 5;
  spec.centroids_per_bundle = 8;
  spec.fibers_per_bundle = 60;
  spec.distractor_count = 50;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("oracle scores match long-hand references") {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const ResampledFiber c = random_curve(rng);
    const ResampledFiber a = random_relative(rng, c, 2.0, 1.0, 0.3);
    const double tn_ref = ref_tn(ref_length(a), ref_length(c));
    CHECK(oracle_score(a, c, OracleMode::exact) == doctest::Approx(ref_d_me(a, c) + tn_ref).epsilon(1e-12));
    CHECK(oracle_score(a, c, OracleMode::endpoint) == doctest::Approx(ref_endpoint(a, c).score).epsilon(1e-12));
    // The exact score minimizes over both pairings.
    CHECK(oracle_score(a, c, OracleMode::exact) <= oracle_score(a, c, OracleMode::endpoint));
  }
}

TEST_CASE("oracles segment centroids to themselves") {
  const SyntheticData data = generate_synthetic(small_spec());
  std::vector<ResampledFiber> centroids;
  std::vector<std::int32_t> expected;
  for (std::size_t b = 0; b < data.atlas.bundles.size(); ++b) {
    for (const ResampledFiber& c : data.atlas.bundles[b].centroids) {
      centroids.push_back(c);
      centroids.push_back(reversed(c));
      expected.insert(expected.end(), 2, static_cast<std::int32_t>(b));
    }
  }
  for (OracleMode mode : {OracleMode::endpoint, OracleMode::exact}) {
    const auto got = oracle_classify(centroids, data.atlas, mode);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].bundle == expected[i]);
      // Reversed copies differ only by the summation order of their lengths.
      if (i % 2 == 0) {
        CHECK(got[i].distance == 0.0);
      } else {
        CHECK(got[i].distance < 1e-12);
      }
    }
  }
}

TEST_CASE("palindromic fiber scores the same in both modes") {
  ResampledFiber f;
  for (std::size_t i = 0; i < kResampledPoints; ++i) {
    const float d = std::abs(static_cast<float>(i) - 10.0f);
    f[i] = Point3{d, 0.5f * d, 0.0f};
  }
  REQUIRE(reversed(f) == f);
  const ResampledFiber g = translated(f, 0.3, -0.2, 0.1);
  CHECK(oracle_score(f, g, OracleMode::exact) == oracle_score(f, g, OracleMode::endpoint));
  CHECK(oracle_score(f, f, OracleMode::exact) == 0.0);
}

TEST_CASE("compare_assignments") {
  std::vector<Assignment> a(5), b(5);
  a[0] = {1, 0, 2.0};
  b[0] = {1, 3, 2.5};  // same label, different score
  a[1] = {0, 0, 1.0};
  b[1] = {2, 0, 1.0};  // label mismatch
  a[2] = {0, 0, 1.0};  // assigned vs unassigned
  const DiscrepancyReport r = compare_assignments(a, b);
  CHECK(r.total == 5);
  CHECK(r.matching == 3);
  CHECK(r.label_mismatches == 1);
  CHECK(r.assignment_mismatches == 1);
  CHECK(r.mismatches() == 2);
  CHECK(r.mismatch_rate() == doctest::Approx(0.4));
  CHECK(r.max_score_difference == 0.5);
  CHECK_FALSE(r.identical());
  CHECK(compare_assignments(a, a).identical());
  CHECK(format_report(r) ==
        "total_fibers 5\nmatching 3\nlabel_mismatches 1\nassigned_vs_unassigned 1\nmax_score_difference 0.5\n");
  CHECK_THROWS(compare_assignments(a, std::vector<Assignment>(4)));
}

TEST_CASE("adversarial loop is accepted only by the exact oracle") {
  const LoopPair loop = adversarial_loop();
  Atlas atlas;
  atlas.bundles.push_back({"loop", LoopPair::kThreshold, {loop.centroid}});
  const std::vector<ResampledFiber> fibers{loop.fiber, loop.centroid};

  CHECK(oracle_score(loop.fiber, loop.centroid, OracleMode::endpoint) > LoopPair::kThreshold);
  const double exact = oracle_score(loop.fiber, loop.centroid, OracleMode::exact);
  CHECK(exact < LoopPair::kThreshold);
  CHECK(exact == doctest::Approx(ref_d_me(loop.fiber, loop.centroid) +
                                 ref_tn(ref_length(loop.fiber), ref_length(loop.centroid))));

  const auto endpoint = oracle_classify(fibers, atlas, OracleMode::endpoint);
  const auto exact_labels = oracle_classify(fibers, atlas, OracleMode::exact);
  CHECK_FALSE(endpoint[0].assigned());
  CHECK(exact_labels[0].bundle == 0);
  CHECK(endpoint[1].bundle == 0);

  // The cascade follows the endpoint rule.
  CHECK(segment(fibers, atlas).assignments == endpoint);

  const DivergenceCheck check = explain_divergence(fibers, atlas, endpoint, exact_labels);
  CHECK(check.fibers_examined == 1);
  CHECK(check.divergent_pairs == 1);
  CHECK(check.unexplained_pairs == 0);
}

TEST_CASE("exact and endpoint oracles agree on well-separated data") {
  const SyntheticData data = generate_synthetic(small_spec(21));
  const auto endpoint = oracle_classify(data.fibers, data.atlas, OracleMode::endpoint);
  const auto exact = oracle_classify(data.fibers, data.atlas, OracleMode::exact);
  const DiscrepancyReport r = compare_assignments(exact, endpoint);
  CHECK(r.mismatch_rate() < 0.01);
  const DivergenceCheck check = explain_divergence(data.fibers, data.atlas, endpoint, exact);
  CHECK(check.unexplained_pairs == 0);
  CHECK(segment(data.fibers, data.atlas).assignments == endpoint);
}

TEST_CASE("synthetic generator") {
  SUBCASE("deterministic per seed") {
    const SyntheticData a = generate_synthetic(small_spec(4));
    const SyntheticData b = generate_synthetic(small_spec(4));
    const SyntheticData c = generate_synthetic(small_spec(5));
    CHECK(a.fibers == b.fibers);
    CHECK(a.truth == b.truth);
    CHECK(a.atlas.bundles[0].centroids == b.atlas.bundles[0].centroids);
    CHECK(a.fibers != c.fibers);
  }
  SUBCASE("shape of the output") {
    const SyntheticSpec spec = small_spec();
    const SyntheticData d = generate_synthetic(spec);
    CHECK(d.atlas.bundles.size() == spec.bundle_count);
    CHECK(d.atlas.centroid_count() == spec.bundle_count * spec.centroids_per_bundle);
    CHECK(d.fibers.size() == spec.bundle_count * spec.fibers_per_bundle + spec.distractor_count);
    CHECK(d.truth.size() == d.fibers.size());
    CHECK(std::count(d.truth.begin(), d.truth.end(), kDistractor) == 50);
    CHECK(std::count(d.truth.begin(), d.truth.end(), 2) == 60);
    std::set<std::string> names;
    for (const AtlasBundle& b : d.atlas.bundles) {
      names.insert(b.name);
      CHECK(b.threshold == spec.threshold);
      for (const ResampledFiber& c : b.centroids) {
        const double len = polyline_length(c);
        CHECK(len > 35.0);
        CHECK(len < 90.0);
      }
    }
    CHECK(names.size() == spec.bundle_count);
    CHECK_NOTHROW(d.atlas.validate());
  }
  SUBCASE("zero noise reproduces centroids") {
    SyntheticSpec spec = small_spec();
    spec.sigma = 0.0;
    spec.distractor_count = 0;
    const SyntheticData d = generate_synthetic(spec);
    const auto labels = segment(d.fibers, d.atlas).assignments;
    for (std::size_t i = 0; i < d.fibers.size(); ++i) {
      CHECK(labels[i].bundle == d.truth[i]);
      CHECK(labels[i].distance < 1e-12);
    }
  }
  SUBCASE("accuracy and distractor rejection") {
    SyntheticSpec spec = small_spec(9);
    spec.fibers_per_bundle = 400;
    spec.distractor_count = 400;
    const SyntheticData d = generate_synthetic(spec);
    const auto labels = segment(d.fibers, d.atlas).assignments;
    std::size_t correct = 0, members = 0;
    for (std::size_t i = 0; i < d.fibers.size(); ++i) {
      if (d.truth[i] == kDistractor) {
        CHECK_FALSE(labels[i].assigned());
      } else {
        ++members;
        correct += labels[i].bundle == d.truth[i];
      }
    }
    CHECK(static_cast<double>(correct) >= 0.99 * static_cast<double>(members));
  }
  SUBCASE("invalid specs") {
    SyntheticSpec spec = small_spec();
    spec.separation = 2 * spec.threshold;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec = small_spec();
    spec.bundle_count = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec = small_spec();
    spec.sigma = -1;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
  }
  SUBCASE("truth CSV") {
    Atlas atlas;
    atlas.bundles.push_back({"a", 1.0, {}});
    atlas.bundles.push_back({"b", 1.0, {}});
    const std::vector<std::int32_t> truth{1, kDistractor, 0};
    CHECK(format_truth(truth, atlas) == "fiber_index,bundle_index,bundle_name\n0,1,b\n1,-1,\n2,0,a\n");
  }
}

TEST_CASE("sample_subject") {
  const SyntheticData d = generate_synthetic(small_spec());
  const auto a = sample_subject(d.atlas, 500, 0.5, 7);
  CHECK(a.size() == 500);
  CHECK(a == sample_subject(d.atlas, 500, 0.5, 7));
  CHECK(a != sample_subject(d.atlas, 500, 0.5, 8));
  const auto labels = segment(a, d.atlas).assignments;
  CHECK(std::count_if(labels.begin(), labels.end(), [](const Assignment& x) { return x.assigned(); }) >= 495);
}

TEST_CASE("Rng") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());

  Rng r(1);
  double sum = 0, sum2 = 0;
  std::vector<int> buckets(7, 0);
  constexpr int kN = 200000;
  for (int i = 0; i < kN; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = r.index(7);
    REQUIRE(k < 7);
    ++buckets[k];
    const double z = r.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(sum / kN == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
  CHECK(sum2 / kN == doctest::Approx(1.0).epsilon(0.02));
  for (int c : buckets) CHECK(c == doctest::Approx(kN / 7.0).epsilon(0.03));
  CHECK_THROWS(r.index(0));
}

TEST_CASE("bench harness") {
  const SyntheticData d = generate_synthetic(small_spec());
  const std::size_t sizes[] = {200, 400};
  const int workers[] = {1, 2};
  std::ostringstream progress;
  const auto rows = bench_run(sizes, d.atlas, workers, 0.5, 1, &progress);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].fibers == 200);
  CHECK(rows[1].workers == 2);
  CHECK(rows[3].fibers == 400);
  for (const BenchRow& row : rows) {
    CHECK(row.seconds >= 0.0);
    CHECK(row.peak_bytes > 0);
    const double sum = row.discard_t1 + row.discard_t2 + row.discard_t3 + row.discard_t4 + row.accepted;
    CHECK(sum == doctest::Approx(1.0));
  }
  // Same input, different worker counts: identical stage fractions.
  CHECK(rows[0].discard_t1 == rows[1].discard_t1);
  CHECK(rows[2].accepted == rows[3].accepted);

  std::istringstream lines(progress.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
  }
  CHECK(count == 4);
  CHECK(std::string(kBenchHeader).find("peak_bytes") != std::string::npos);
}

TEST_CASE("bench row formatting") {
  CascadeStats s;
  s.pairs_total = 10;
  s.discarded_test1 = 6;
  s.discarded_test2 = 2;
  s.discarded_test3 = 1;
  s.accepted = 1;
  const BenchRow row = make_bench_row(100, 4, 0.5, 2048, s);
  CHECK(format_bench_row(row) == "100,4,0.500000,2048,0.600000,0.200000,0.100000,0.000000,0.100000");
}

TEST_CASE("resident memory probes") {
  CHECK(current_resident_bytes() > 0);
  CHECK(peak_resident_bytes() >= current_resident_bytes() / 2);
  if (reset_peak_resident()) {
    std::vector<char> block(64 << 20, 1);
    const std::uint64_t peak = peak_resident_bytes();
    CHECK(peak >= block.size());
  }
}
