#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fiberseg/dataset_io.hpp"

namespace fiberseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand. `args` excludes the program name. Results go to
/// files or `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Per-bundle fiber counts with min/median/max scores, then the unassigned
/// count and the total.
std::string stats_report(std::span<const Assignment> assignments, const Atlas& atlas);

}  // namespace fiberseg::cli
