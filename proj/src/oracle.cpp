#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "fiberseg/validation.hpp"

namespace fiberseg::validation {
namespace {

struct EndpointRule {
  double direct;
  double inverse;
};

EndpointRule endpoint_rule(const ResampledFiber& a, const ResampledFiber& c) {
  return {std::max(point_distance(a[0], c[0]), point_distance(a[kLastIndex], c[kLastIndex])),
          std::max(point_distance(a[0], c[kLastIndex]), point_distance(a[kLastIndex], c[0]))};
}

double score_with_lengths(const ResampledFiber& a, double la, const ResampledFiber& c, double lc, OracleMode mode) {
  double dist = 0.0;
  if (mode == OracleMode::exact) {
    dist = d_me(a, c);
  } else {
    const EndpointRule ends = endpoint_rule(a, c);
    const Orientation o = ends.inverse < ends.direct ? Orientation::inverse : Orientation::direct;
    dist = max_pointwise_distance(a, c, o);
  }
  return dist + tn(la, lc);
}

bool same_outcome(const Assignment& a, const Assignment& b) {
  return a.bundle == b.bundle && (!a.assigned() || a.distance == b.distance);
}

}  // namespace

const char* to_string(OracleMode mode) {
  return mode == OracleMode::exact ? "exact" : "endpoint";
}

double oracle_score(const ResampledFiber& a, const ResampledFiber& c, OracleMode mode) {
  return score_with_lengths(a, polyline_length(a), c, polyline_length(c), mode);
}

std::vector<Assignment> oracle_classify(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                                        OracleMode mode) {
  atlas.validate();
  std::vector<std::vector<double>> lengths(atlas.bundles.size());
  for (std::size_t b = 0; b < atlas.bundles.size(); ++b) {
    for (const ResampledFiber& c : atlas.bundles[b].centroids) {
      lengths[b].push_back(polyline_length(c));
    }
  }
  std::vector<Assignment> out(fibers.size());
  for (std::size_t i = 0; i < fibers.size(); ++i) {
    const double la = polyline_length(fibers[i]);
    Assignment& best = out[i];
    for (std::size_t b = 0; b < atlas.bundles.size(); ++b) {
      const AtlasBundle& bundle = atlas.bundles[b];
      for (std::size_t k = 0; k < bundle.centroids.size(); ++k) {
        const double score = score_with_lengths(fibers[i], la, bundle.centroids[k], lengths[b][k], mode);
        if (score <= bundle.threshold && score < best.distance) {
          best.bundle = static_cast<std::int32_t>(b);
          best.centroid = static_cast<std::int32_t>(k);
          best.distance = score;
        }
      }
    }
  }
  return out;
}

DiscrepancyReport compare_assignments(std::span<const Assignment> a, std::span<const Assignment> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cannot compare assignment sequences of lengths " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
  }
  DiscrepancyReport r;
  r.total = a.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].bundle == b[i].bundle) {
      ++r.matching;
      if (a[i].assigned()) {
        r.max_score_difference = std::max(r.max_score_difference, std::abs(a[i].distance - b[i].distance));
      }
    } else if (a[i].assigned() && b[i].assigned()) {
      ++r.label_mismatches;
    } else {
      ++r.assignment_mismatches;
    }
  }
  return r;
}

std::string format_report(const DiscrepancyReport& r) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.6g", r.max_score_difference);
  return "total_fibers " + std::to_string(r.total) + "\nmatching " + std::to_string(r.matching) +
         "\nlabel_mismatches " + std::to_string(r.label_mismatches) + "\nassigned_vs_unassigned " +
         std::to_string(r.assignment_mismatches) + "\nmax_score_difference " + buf + "\n";
}

DivergenceCheck explain_divergence(std::span<const ResampledFiber> fibers, const Atlas& atlas,
                                   std::span<const Assignment> endpoint, std::span<const Assignment> exact) {
  if (endpoint.size() != fibers.size() || exact.size() != fibers.size()) {
    throw std::invalid_argument("assignment sequences must match the fiber count");
  }
  DivergenceCheck check;
  for (std::size_t i = 0; i < fibers.size(); ++i) {
    if (same_outcome(endpoint[i], exact[i])) {
      continue;
    }
    ++check.fibers_examined;
    const ResampledFiber& a = fibers[i];
    const double la = polyline_length(a);
    for (const AtlasBundle& bundle : atlas.bundles) {
      for (const ResampledFiber& c : bundle.centroids) {
        const double lc = polyline_length(c);
        const double e = score_with_lengths(a, la, c, lc, OracleMode::endpoint);
        const double x = score_with_lengths(a, la, c, lc, OracleMode::exact);
        const bool accept_e = e <= bundle.threshold;
        const bool accept_x = x <= bundle.threshold;
        if (accept_e == accept_x && (!accept_e || e == x)) {
          continue;
        }
        ++check.divergent_pairs;
        const EndpointRule ends = endpoint_rule(a, c);
        if (ends.direct > bundle.threshold || ends.inverse > bundle.threshold) {
          ++check.unexplained_pairs;
        }
      }
    }
  }
  return check;
}

}  // namespace fiberseg::validation
