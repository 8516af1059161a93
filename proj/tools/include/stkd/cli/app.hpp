#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stkd/cli/run_config.hpp"
#include "stkd/data.hpp"
#include "stkd/graph.hpp"

namespace stkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDiverged = 1;
inline constexpr int kExitUsage = 2;

/// Graph, series and normalized windows described by a config's data block.
struct PreparedData {
  Graph graph;
  NormalizedAdjacency adj;
  TrafficSeries series;
  WindowedDataset dataset;
};

PreparedData prepare_data(const RunConfig& cfg);

/// output_dir after the STKD_OUTPUT_DIR override.
std::filesystem::path effective_output_dir(const RunConfig& cfg);

/// Runs one subcommand; args excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stkd::cli
