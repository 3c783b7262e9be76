#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace traitgeo::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,      // bad flags, invalid or unreadable input, unwritable output
  kNumerical = 3,  // RankDeficient and friends
  kExternal = 4,   // judge service failures
};

/// Flags of every subcommand in one place; validated per subcommand before any
/// work starts.
struct RunConfig {
  std::string subcommand;

  std::string in_path;
  std::string in_format = "json";
  std::string out_path;
  std::string out_format;
  std::string diagnostics_path;

  std::string scheme;
  std::string schemes;  // comma list for diagnose
  std::optional<double> gamma;
  std::optional<double> tau;
  std::optional<double> beta;
  std::string order;  // comma list of trait names, tags or indices

  std::string records_path;
  std::string condition;
  std::string model_tag;
  std::string matrix_out;
  std::string summary_out;
  std::string fluency_out;
  std::string variance_out;
  bool fluency = false;
  std::string traits;  // comma list; default OCEAN

  std::string world_path;
  std::optional<unsigned long long> seed;
  double intensity = 1.0;
  std::string out_dir;
  std::string report_format = "csv";

  std::string rubrics_path;
  bool mock = false;
  std::string endpoint;
  std::string model = "gpt-4o-mini";
  double timeout = 30.0;
  int retries = 3;
  int concurrency = 4;
  std::string verdict_log;
};

/// Run the CLI with `args` (program name excluded). Never throws.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace traitgeo::cli
