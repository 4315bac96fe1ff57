#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gridhedge/scenario.hpp"

namespace gridhedge {

/// Flat `key = value` scenario file; '#' starts a comment. Vectors are
/// comma-separated, one entry per microgrid. Units are fixed by key name:
///
///   microgrids            count
///   labels                names (optional)
///   mu_per_hour           GBM drift
///   sigma_per_sqrt_hour   GBM volatility
///   correlation           upper triangle of rho, row-major (rho_12, rho_13, ..., rho_23, ...)
///   demand_kw             critical demand at the horizon
///   battery_unit_kw       power of one battery unit
///   initial_kw            generation at t = 0
///   horizon_hours, rebalance_steps, paths, seed
///   case_filter           e.g. ge_lt, or all
///   bootstrap_resamples, ci_level
///   tes_terminal          limit | carry
///   lattice_engine        recombining | tree
///   max_nodes
///
/// Keys starting with "manifest." are ignored, so a run manifest is itself a
/// valid config. Throws Error(MalformedInput) naming the line on bad input.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Writes every key with round-trip precision.
void write_config(std::ostream& out, const ScenarioConfig& config);

struct ManifestInfo {
  std::string command;
  std::vector<std::string> outputs;
  std::string extra;  // additional "manifest.*" lines, already formatted
};

/// Writes `manifest.txt` into `dir` via a temporary file and rename.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const ScenarioConfig& config,
                                     const ManifestInfo& info);

/// Writes `contents` to `path` through a temporary sibling and rename.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

const char* tool_version();

}  // namespace gridhedge
