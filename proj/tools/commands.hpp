#pragma once

// Subcommands of the nvdnp front end. Each writes CSV files into an output
// directory and a `key: value` report to `out`; diagnostics go to `err`.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace nvdnp::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
};

namespace fs = std::filesystem;

void cmd_odmr(const RunConfig& config, const fs::path& dir, std::ostream& out,
              const std::string& prefix = "odmr");
void cmd_dnp_sweep(const RunConfig& config, const fs::path& dir, std::ostream& out,
                   const std::string& prefix = "dnp_sweep");
void cmd_buildup(const RunConfig& config, const fs::path& dir, std::ostream& out,
                 const std::string& prefix = "buildup");
void cmd_nmr_synth(const RunConfig& config, const fs::path& dir, std::ostream& out);
void cmd_nmr_process(const RunConfig& config, const fs::path& fid_csv, const fs::path& dir,
                     std::ostream& out);
void cmd_calibrate(const CalibrationConfig& inputs, const fs::path& dir, std::ostream& out,
                   const std::string& prefix = "calibration");
void cmd_coil_map(const RunConfig& config, const fs::path& dir, std::ostream& out,
                  const std::string& prefix = "coil");

/// Figure bundles: fig1, fig2, fig3, figS2. Files land in `dir / figure`.
void cmd_reproduce(const RunConfig& config, const std::string& figure, const fs::path& dir,
                   std::ostream& out);

/// Full command line, returning the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nvdnp::app
