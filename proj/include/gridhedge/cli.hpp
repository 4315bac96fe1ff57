#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gridhedge::cli {

enum ExitCode : int {
  kOk = 0,
  kValidationFailed = 1,
  kInputError = 2,
  kCalibrationInfeasible = 3,
  kPrecondition = 4,
  kEmptyResult = 5,
};

struct EstimateArgs {
  std::string input;
  std::optional<double> interval_hours;  // defaults to the file's own spacing
  std::optional<std::string> window;     // "HH:MM-HH:MM"
  int bins = 16;
};

struct AllocateArgs {
  std::string config;
  std::string mode = "ces";  // ces | tes
  double time_hours = 0.0;
  std::vector<double> generation;  // current P_G; defaults to initial_kw
  std::vector<double> prev_a;      // TES weights held before this step
};

struct SimulateArgs {
  std::string config;
  std::optional<std::size_t> paths;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> case_filter;
  std::string out_dir = ".";
};

struct ValidateArgs {
  std::string suite = "all";
  bool inject_fault = false;
  bool json = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> case_paths;
};

int cmd_estimate(const EstimateArgs& args, std::ostream& out, std::ostream& err);
int cmd_allocate(const AllocateArgs& args, std::uint64_t max_nodes, std::ostream& out,
                 std::ostream& err);
int cmd_simulate(const SimulateArgs& args, std::uint64_t max_nodes, std::ostream& out,
                 std::ostream& err, const std::string& command_line = "");
int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err);

/// Parses argv (without the program name) and dispatches to a subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gridhedge::cli
