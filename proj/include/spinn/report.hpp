#ifndef SPINN_REPORT_HPP_
#define SPINN_REPORT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "spinn/sim_harness.hpp"

namespace spinn {

enum class ReportFormat { kCsv, kJson };

// Fixed-precision text so that equal runs give equal bytes.
std::string samples_csv(const RunReport& report);
std::string invocations_csv(const RunReport& report);
std::string aggregates_csv(const std::vector<RunReport>& reports);
std::string report_json(const RunReport& report);
// Long format: one row per (value, system).
std::string sweep_csv(SweepVariable variable, const std::vector<SweepCell>& cells);
std::string sweep_json(SweepVariable variable, const std::vector<SweepCell>& cells);

// Writes samples.csv, invocations.csv and aggregates.csv, or report.json.
// Returns the files written.
std::vector<std::filesystem::path> emit_report(const RunReport& report,
                                               const std::filesystem::path& dir,
                                               ReportFormat format);
std::vector<std::filesystem::path> emit_sweep(SweepVariable variable,
                                              const std::vector<SweepCell>& cells,
                                              const std::filesystem::path& dir,
                                              ReportFormat format);

}  // namespace spinn

#endif  // SPINN_REPORT_HPP_
