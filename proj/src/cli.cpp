#include "fiberseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fiberseg/classifier.hpp"
#include "fiberseg/validation.hpp"

namespace fiberseg::cli {
namespace {

namespace fs = std::filesystem;
using validation::OracleMode;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
T parse_value(const std::string& text, const std::string& flag) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError(flag + ": cannot parse '" + text + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    out.push_back(parse_value<T>(item, flag));
  }
  if (out.empty()) {
    throw UsageError(flag + ": empty list");
  }
  return out;
}

int parse_threads(const std::string& text) {
  if (text == "auto") {
    return 0;
  }
  const int n = parse_value<int>(text, "--threads");
  if (n < 1) {
    throw UsageError("--threads: expected a positive count or 'auto'");
  }
  return n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
}

std::string format_stats(const CascadeStats& s) {
  std::ostringstream out;
  out << "pairs_total " << s.pairs_total << "\n"
      << "discarded_test1 " << s.discarded_test1 << "\n"
      << "discarded_test2 " << s.discarded_test2 << "\n"
      << "discarded_test3 " << s.discarded_test3 << "\n"
      << "discarded_test4_dme " << s.discarded_test4_dme << "\n"
      << "discarded_test4_tn " << s.discarded_test4_tn << "\n"
      << "accepted " << s.accepted << "\n";
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct SegmentArgs {
  std::string subject, atlas, out, threads = "auto", mode = "cascade", test3 = "3,7,13,17";
};

struct ResampleArgs {
  std::string in, out;
  std::size_t points = kResampledPoints;
};

struct SyntheticArgs {
  std::string out;
  validation::SyntheticSpec spec;
};

struct ValidateArgs {
  std::string subject, atlas, mode = "endpoint", threads = "auto";
};

struct BenchArgs {
  std::string atlas, sizes, threads, csv;
  std::uint64_t seed = 0;
  double sigma = 1.0;
};

struct StatsArgs {
  std::string assignments, atlas;
};

std::vector<ResampledFiber> load_subject(const std::string& path, FiberDataset* raw = nullptr) {
  FiberDataset dataset = read_fiber_file(path);
  if (dataset.empty()) {
    throw InvalidInput("subject file '" + path + "' contains no fibers");
  }
  std::vector<ResampledFiber> fibers = resample_dataset(dataset);
  if (raw != nullptr) {
    *raw = std::move(dataset);
  }
  return fibers;
}

int cmd_segment(const SegmentArgs& a, std::ostream& out, std::ostream& err) {
  CascadeConfig cfg;
  cfg.worker_count = parse_threads(a.threads);
  const std::vector<std::size_t> idx = parse_list<std::size_t>(a.test3, "--test3-indices");
  if (idx.size() != cfg.test3_indices.size()) {
    throw UsageError("--test3-indices: expected 4 indices");
  }
  std::copy(idx.begin(), idx.end(), cfg.test3_indices.begin());
  try {
    cfg.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("--test3-indices: ") + e.what());
  }

  FiberDataset raw;
  const std::vector<ResampledFiber> fibers = load_subject(a.subject, &raw);
  const Atlas atlas = load_atlas(a.atlas);

  const auto start = std::chrono::steady_clock::now();
  SegmentResult result;
  if (a.mode == "cascade") {
    result = segment(fibers, atlas, cfg);
  } else {
    const OracleMode mode = a.mode == "oracle-exact" ? OracleMode::exact : OracleMode::endpoint;
    result.assignments = validation::oracle_classify(fibers, atlas, mode);
  }
  const double elapsed = seconds_since(start);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_assignments(result.assignments, atlas, dir / "assignments.csv");
  write_segmented_bundles(raw, result.assignments, atlas, dir / "bundles");
  std::string stats = "mode " + a.mode + "\n";
  if (a.mode == "cascade") {
    stats += format_stats(result.stats);
  }
  stats += stats_report(result.assignments, atlas);
  write_text(dir / "stats.txt", stats);

  const auto assigned = std::count_if(result.assignments.begin(), result.assignments.end(),
                                      [](const Assignment& x) { return x.assigned(); });
  out << "segmented " << fibers.size() << " fibers against " << atlas.centroid_count() << " centroids: "
      << assigned << " assigned, " << (fibers.size() - static_cast<std::size_t>(assigned)) << " unassigned\n";
  err << "classification took " << elapsed << " s\n";
  return kExitOk;
}

int cmd_resample(const ResampleArgs& a, std::ostream& out) {
  if (a.points < 2) {
    throw UsageError("--points: must be at least 2");
  }
  const FiberDataset in = read_fiber_file(a.in);
  FiberDataset result;
  result.reserve(in.size(), in.size() * a.points);
  for (std::size_t i = 0; i < in.size(); ++i) {
    result.add(resample(in.fiber(i), a.points));
  }
  write_fiber_file(result, a.out);
  out << "resampled " << result.size() << " fibers to " << a.points << " points\n";
  return kExitOk;
}

int cmd_gen_synthetic(const SyntheticArgs& a, std::ostream& out) {
  try {
    a.spec.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const validation::SyntheticData data = validation::generate_synthetic(a.spec);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_atlas(data.atlas, dir / "atlas");
  if (!data.fibers.empty()) {
    write_fiber_file(to_dataset(data.fibers), dir / "subject.fib");
  }
  write_text(dir / "truth.csv", validation::format_truth(data.truth, data.atlas));
  out << "wrote atlas (" << data.atlas.bundles.size() << " bundles, " << data.atlas.centroid_count()
      << " centroids) and " << data.fibers.size() << " subject fibers to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  CascadeConfig cfg;
  cfg.worker_count = parse_threads(a.threads);
  const std::vector<ResampledFiber> fibers = load_subject(a.subject);
  const Atlas atlas = load_atlas(a.atlas);

  const SegmentResult cascade = segment(fibers, atlas, cfg);
  const std::vector<Assignment> endpoint = validation::oracle_classify(fibers, atlas, OracleMode::endpoint);
  const validation::DiscrepancyReport vs_endpoint = validation::compare_assignments(cascade.assignments, endpoint);
  out << "[cascade vs endpoint-orientation oracle]\n" << validation::format_report(vs_endpoint);

  if (a.mode == "exact") {
    const std::vector<Assignment> exact = validation::oracle_classify(fibers, atlas, OracleMode::exact);
    const validation::DiscrepancyReport vs_exact = validation::compare_assignments(cascade.assignments, exact);
    const validation::DivergenceCheck why = validation::explain_divergence(fibers, atlas, endpoint, exact);
    out << "[cascade vs exact oracle]\n"
        << validation::format_report(vs_exact) << "discrepancy_rate " << format_score(vs_exact.mismatch_rate())
        << "\ndivergent_fibers " << why.fibers_examined << "\ndivergent_pairs " << why.divergent_pairs
        << "\nunexplained_pairs " << why.unexplained_pairs << "\n";
  }
  const bool ok = vs_endpoint.identical();
  out << (ok ? "PASS" : "FAIL") << ": cascade " << (ok ? "matches" : "differs from")
      << " the endpoint-orientation oracle\n";
  return ok ? kExitOk : kExitData;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<std::size_t> sizes = parse_list<std::size_t>(a.sizes, "--sizes");
  const std::vector<int> workers = parse_list<int>(a.threads, "--threads");
  if (std::any_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n == 0; }) ||
      std::any_of(workers.begin(), workers.end(), [](int w) { return w < 1; })) {
    throw UsageError("--sizes and --threads take positive values");
  }
  if (!(a.sigma >= 0.0)) {
    throw UsageError("--sigma: must be non-negative");
  }
  const Atlas atlas = load_atlas(a.atlas);
  err << validation::kBenchHeader << "\n";
  const std::vector<validation::BenchRow> rows = validation::bench_run(sizes, atlas, workers, a.sigma, a.seed, &err);
  std::string csv = std::string(validation::kBenchHeader) + "\n";
  for (const auto& r : rows) {
    csv += validation::format_bench_row(r) + "\n";
  }
  write_text(a.csv, csv);
  out << csv;
  return kExitOk;
}

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const Atlas atlas = load_atlas(a.atlas);
  const std::vector<Assignment> assignments = read_assignments(a.assignments);
  for (const Assignment& x : assignments) {
    if (x.assigned() && static_cast<std::size_t>(x.bundle) >= atlas.bundles.size()) {
      throw InvalidInput("assignment references bundle " + std::to_string(x.bundle) + " not in the atlas");
    }
  }
  out << stats_report(assignments, atlas);
  return kExitOk;
}

}  // namespace

std::string stats_report(std::span<const Assignment> assignments, const Atlas& atlas) {
  std::vector<std::vector<double>> scores(atlas.bundles.size());
  std::size_t unassigned = 0;
  for (const Assignment& a : assignments) {
    if (a.assigned()) {
      scores.at(static_cast<std::size_t>(a.bundle)).push_back(a.distance);
    } else {
      ++unassigned;
    }
  }
  std::string out = "# bundle_name count min median max\n";
  for (std::size_t b = 0; b < scores.size(); ++b) {
    std::vector<double>& s = scores[b];
    out += atlas.bundles[b].name + " " + std::to_string(s.size());
    if (s.empty()) {
      out += " - - -\n";
      continue;
    }
    std::sort(s.begin(), s.end());
    const std::size_t mid = s.size() / 2;
    const double median = s.size() % 2 == 1 ? s[mid] : 0.5 * (s[mid - 1] + s[mid]);
    out += " " + format_score(s.front()) + " " + format_score(median) + " " + format_score(s.back()) + "\n";
  }
  out += "unassigned " + std::to_string(unassigned) + "\n";
  out += "total " + std::to_string(assignments.size()) + "\n";
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Atlas-based white-matter fiber segmentation", "fiberseg"};
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* segment_cmd = app.add_subcommand("segment", "Label every subject fiber with its closest atlas bundle");
  segment_cmd->add_option("--subject", seg.subject, "Subject FIBR file")->required();
  segment_cmd->add_option("--atlas", seg.atlas, "Atlas directory containing bundles.txt")->required();
  segment_cmd->add_option("--out", seg.out, "Output directory")->required();
  segment_cmd->add_option("--threads", seg.threads, "Worker count or 'auto'")->capture_default_str();
  segment_cmd->add_option("--mode", seg.mode, "Classifier")
      ->check(CLI::IsMember({"cascade", "oracle-endpoint", "oracle-exact"}))
      ->capture_default_str();
  segment_cmd->add_option("--test3-indices", seg.test3, "Four intermediate point indices")->capture_default_str();

  ResampleArgs res;
  auto* resample_cmd = app.add_subcommand("resample", "Resample fibers to equally spaced points");
  resample_cmd->add_option("--in", res.in, "Input FIBR file")->required();
  resample_cmd->add_option("--out", res.out, "Output FIBR file")->required();
  resample_cmd->add_option("--points", res.points, "Points per fiber")->capture_default_str();

  SyntheticArgs syn;
  auto* synth_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic atlas and subject with ground truth");
  synth_cmd->add_option("--out", syn.out, "Output directory")->required();
  synth_cmd->add_option("--bundles", syn.spec.bundle_count, "Bundle count")->required();
  synth_cmd->add_option("--centroids", syn.spec.centroids_per_bundle, "Centroids per bundle")->required();
  synth_cmd->add_option("--fibers", syn.spec.fibers_per_bundle, "Member fibers per bundle")->required();
  synth_cmd->add_option("--distractors", syn.spec.distractor_count, "Distractor fibers")->required();
  synth_cmd->add_option("--sigma", syn.spec.sigma, "Member noise per point (mm)")->required();
  synth_cmd->add_option("--separation", syn.spec.separation, "Minimum gap between bundles (mm)")->required();
  synth_cmd->add_option("--threshold", syn.spec.threshold, "Bundle threshold (mm)")->required();
  synth_cmd->add_option("--seed", syn.spec.seed, "Random seed")->required();

  ValidateArgs val;
  auto* validate_cmd = app.add_subcommand("validate", "Compare the cascade with the brute-force oracles");
  validate_cmd->add_option("--subject", val.subject, "Subject FIBR file")->required();
  validate_cmd->add_option("--atlas", val.atlas, "Atlas directory")->required();
  validate_cmd->add_option("--mode", val.mode, "Oracle to report against")
      ->check(CLI::IsMember({"endpoint", "exact"}))
      ->capture_default_str();
  validate_cmd->add_option("--threads", val.threads, "Worker count or 'auto'")->capture_default_str();

  BenchArgs ben;
  auto* bench_cmd = app.add_subcommand("bench", "Time and memory of segment across sizes and worker counts");
  bench_cmd->add_option("--atlas", ben.atlas, "Atlas directory")->required();
  bench_cmd->add_option("--sizes", ben.sizes, "Comma-separated fiber counts")->required();
  bench_cmd->add_option("--threads", ben.threads, "Comma-separated worker counts")->required();
  bench_cmd->add_option("--csv", ben.csv, "Output CSV path")->required();
  bench_cmd->add_option("--seed", ben.seed, "Random seed")->required();
  bench_cmd->add_option("--sigma", ben.sigma, "Subject noise per point (mm)")->capture_default_str();

  StatsArgs sta;
  auto* stats_cmd = app.add_subcommand("stats", "Per-bundle summary of an assignment CSV");
  stats_cmd->add_option("--assignments", sta.assignments, "Assignment CSV")->required();
  stats_cmd->add_option("--atlas", sta.atlas, "Atlas directory")->required();

  CLI::App* active = &app;
  try {
    std::vector<std::string> reversed_args(args.rbegin(), args.rend());
    app.parse(reversed_args);
  } catch (const CLI::CallForHelp&) {
    for (CLI::App* sub : app.get_subcommands()) {
      active = sub;
    }
    out << active->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    for (CLI::App* sub : {segment_cmd, resample_cmd, synth_cmd, validate_cmd, bench_cmd, stats_cmd}) {
      if (sub->parsed()) {
        active = sub;
      }
    }
    err << "error: " << e.what() << "\n" << active->help();
    return kExitUsage;
  }

  try {
    if (segment_cmd->parsed()) return cmd_segment(seg, out, err);
    if (resample_cmd->parsed()) return cmd_resample(res, out);
    if (synth_cmd->parsed()) return cmd_gen_synthetic(syn, out);
    if (validate_cmd->parsed()) return cmd_validate(val, out);
    if (bench_cmd->parsed()) return cmd_bench(ben, out, err);
    if (stats_cmd->parsed()) return cmd_stats(sta, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace fiberseg::cli
