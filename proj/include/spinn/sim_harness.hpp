#ifndef SPINN_SIM_HARNESS_HPP_
#define SPINN_SIM_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spinn/bundle.hpp"
#include "spinn/exec_engine.hpp"
#include "spinn/network_trace.hpp"
#include "spinn/runtime_profiler.hpp"
#include "spinn/scheduler.hpp"
#include "spinn/transport.hpp"

namespace spinn {

enum class SystemKind {
  kSpinn,
  kDeviceOnly,
  kCloudOnly,
  kNonprogressiveSplit,  // one split, final exit only
  kFixedExit,            // input offloaded, one exit for every sample
};

std::string_view to_string(SystemKind kind);
std::optional<SystemKind> parse_system_kind(std::string_view text);
inline constexpr SystemKind kAllSystems[] = {
    SystemKind::kSpinn, SystemKind::kDeviceOnly, SystemKind::kCloudOnly,
    SystemKind::kNonprogressiveSplit, SystemKind::kFixedExit};

struct SlowdownStep {
  double t_s = 0.0;
  double factor = 1.0;
};

struct Outage {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct Scenario {
  std::string name = "scenario";
  std::shared_ptr<const Bundle> bundle;
  NetworkPresets presets = NetworkPresets::defaults();
  // Trace-driven link, or fixed conditions below when absent.
  std::optional<NetworkTrace> trace;
  NetworkType network_type = NetworkType::kWifi;
  double bandwidth_mbps = 100.0;
  double latency_ms = 5.0;
  double device_sf = 1.0;
  std::vector<SlowdownStep> slowdown{{0.0, 1.0}};
  std::vector<Outage> outages;
  double p_fail = 0.0;
  FailurePolicy failure = FailurePolicy::kFallbackLocal;
  FailureDetection detection = FailureDetection::kConnectionLoss;
  int r_max = 10;
  double backoff_initial_ms = 20.0;
  SlaSpec sla;
  std::size_t samples = 1000;
  bool shuffle = false;
  std::uint64_t seed = 1;
  std::uint32_t variants = 4;
  double pack_bytes_per_ms = 50000.0;
  // Profiler snapshots without a trace; with a trace, one per row.
  double snapshot_interval_s = 1.0;
  // 0 runs samples back to back; otherwise a new sample starts every interval
  // (or when the previous one finishes, if later).
  double arrival_interval_ms = 0.0;
  bool gate_backoff = false;

  void validate() const;
  double slowdown_at(double t_s) const;
  bool server_up_at(double t_s) const;
  LinkConditions link_at(double t_s) const;
  NetworkType network_type_at(double t_s) const;
};

// Scenario document (JSON); relative paths resolve against `base_dir`.
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

struct Invocation {
  double t_s = 0.0;
  std::size_t before_sample = 0;
  Configuration config;
  std::size_t satisfied = 0;
  std::size_t relaxed = 0;
  double elapsed_us = 0.0;  // wall clock; kept out of report files
};

struct SampleRow {
  double t_start_ms = 0.0;
  InferenceRecord record;
};

struct Aggregates {
  std::size_t samples = 0;
  double throughput_ips = 0.0;
  double mean_latency_ms = 0.0;
  double accuracy = 0.0;
  double mean_server_ms = 0.0;
  double mean_device_ms = 0.0;
  double mean_network_ms = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::size_t offloaded = 0;
  std::size_t remote = 0;
  std::size_t cancelled = 0;
  std::size_t failed = 0;
  std::size_t invocations = 0;

  double get(Metric m) const;
};

// Throughput is N over the busiest of the device, network and server stages.
Aggregates aggregate(const std::vector<SampleRow>& rows, std::size_t invocations);

struct RunReport {
  std::string scenario;
  SystemKind system = SystemKind::kSpinn;
  std::vector<SampleRow> rows;
  std::vector<Invocation> invocations;
  Aggregates totals;
  TransportCounters counters;
};

// Execution policy each system runs with.
ExecPolicy policy_for(SystemKind kind, const Bundle& bundle, const SlaSpec& resolved_sla);

// Optional externally owned server and transport (e.g. TCP); the harness
// still drives the server's slowdown. The server must use policy_for(kind).
struct RunHooks {
  ServerCore* server = nullptr;
  ClientTransport* transport = nullptr;
};

RunReport run_scenario(const Scenario& scenario, SystemKind kind = SystemKind::kSpinn,
                       const RunHooks& hooks = {});

enum class SweepVariable { kBandwidth, kSlowdown, kPFail, kLatency };

std::string_view to_string(SweepVariable v);
std::optional<SweepVariable> parse_sweep_variable(std::string_view text);

struct SweepSpec {
  Scenario base;
  SweepVariable variable = SweepVariable::kBandwidth;
  std::vector<double> values;
  std::vector<SystemKind> systems;
};

struct SweepCell {
  double value = 0.0;
  SystemKind system = SystemKind::kSpinn;
  Aggregates totals;
};

Scenario with_value(const Scenario& base, SweepVariable variable, double value);
// Document with a "sweep" object {variable, values, systems} next to the
// scenario fields.
SweepSpec parse_sweep(std::string_view text, const std::filesystem::path& base_dir);
SweepSpec load_sweep(const std::filesystem::path& path);
std::vector<SweepCell> run_sweep(const SweepSpec& spec);

}  // namespace spinn

#endif  // SPINN_SIM_HARNESS_HPP_
