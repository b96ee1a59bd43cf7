#ifndef SPINN_SCHEDULER_HPP_
#define SPINN_SCHEDULER_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spinn/activation_source.hpp"
#include "spinn/bundle.hpp"
#include "spinn/comms_opt.hpp"
#include "spinn/timeline.hpp"

namespace spinn {

enum class Metric { kLatency, kThroughput, kServerCost, kDeviceCost, kAccuracy };
inline constexpr std::size_t kMetricCount = 5;

std::string_view to_string(Metric metric);
std::optional<Metric> parse_metric(std::string_view text);

enum class CompareOp { kLe, kGe, kLt, kGt, kEq };

std::string_view to_string(CompareOp op);
std::optional<CompareOp> parse_compare_op(std::string_view text);
bool compare(double value, CompareOp op, double thr);

// Relative tolerance for treating two metric values as equal.
inline constexpr double kRelTolerance = 1e-9;
bool nearly_equal(double a, double b);

struct HardConstraint {
  Metric metric = Metric::kLatency;
  CompareOp op = CompareOp::kLe;
  double thr = 0.0;
  // "final_exit": thr is added to the final exit's accuracy.
  // "device_only": thr multiplies the metric of plain on-device execution.
  std::string relative_to;
};

enum class SoftMode { kMin, kMax, kValue, kMinViolation };

struct SoftTarget {
  Metric metric = Metric::kThroughput;
  SoftMode mode = SoftMode::kMax;
  double value = 0.0;              // kValue target, or kMinViolation bound
  CompareOp op = CompareOp::kLe;  // kMinViolation only
};

struct SlaSpec {
  std::vector<HardConstraint> hard;
  std::vector<SoftTarget> soft;
};

SlaSpec parse_sla(std::string_view text);
SlaSpec load_sla(const std::filesystem::path& path);
std::string sla_to_text(const SlaSpec& sla);

// A relaxed hard constraint expressed as "minimise the amount of violation".
SoftTarget as_soft(const HardConstraint& c);
// Objective value of `m` under `target`; lower is better.
double objective(const SoftTarget& target, double m);

struct MetricVector {
  double latency_ms = 0.0;
  double throughput_ips = 0.0;
  double server_cost_ms = 0.0;
  double device_cost_ms = 0.0;
  double accuracy = 0.0;

  double get(Metric m) const;
};

// The scheduler's view of current conditions, built from profiler estimates.
struct Conditions {
  double device_sf = 1.0;
  double server_sf = 1.0;
  double latency_ms = 0.0;
  double bandwidth_mbps = 1.0;
  bool server_available = true;
  double pack_bytes_per_ms = 50000.0;
  bool allow_compression = true;
};

struct SplitPlan {
  bool compress = false;
  double pack_ms = 0.0;
  double uplink_bytes = 0.0;
};

SplitPlan plan_split(const SplitTransfer& transfer, double est_ratio, const Conditions& c);

struct SearchSpace {
  std::vector<std::uint32_t> split_indices;  // into Bundle::splits()
  std::vector<std::uint32_t> thr_indices;    // into Bundle::thresholds()
};

SearchSpace full_space(const Bundle& bundle);

// Candidate metrics laid out per metric for cache-friendly scans.
struct MetricTable {
  std::vector<std::uint32_t> split_index;
  std::vector<std::uint32_t> thr_index;
  std::vector<LayerId> split_layer;
  std::vector<double> thr;
  std::array<std::vector<double>, kMetricCount> metric;

  std::size_t size() const { return split_index.size(); }
  double value(Metric m, std::size_t row) const {
    return metric[static_cast<std::size_t>(m)][row];
  }
  MetricVector row(std::size_t i) const;
};

class Evaluator {
 public:
  Evaluator(const Bundle& bundle, ExecPolicy policy, std::vector<SplitTransfer> transfers);

  const Bundle& bundle() const { return model_.bundle(); }
  const CostModel& model() const { return model_; }
  const std::vector<SplitTransfer>& transfers() const { return transfers_; }

  MetricTable estimate(const SearchSpace& space, const Conditions& c,
                       const RatioTracker& ratios) const;
  MetricVector estimate_one(std::uint32_t split_index, std::uint32_t thr_index,
                            const Conditions& c, const RatioTracker& ratios) const;

  // Samples stopping at each exit, for one threshold.
  const std::vector<std::uint64_t>& stop_counts(std::uint32_t thr_index) const {
    return stop_counts_.at(thr_index);
  }
  double accuracy(std::uint32_t thr_index, LayerId split_layer, bool server_available) const;

 private:
  CostModel model_;
  std::vector<SplitTransfer> transfers_;
  std::vector<std::vector<std::uint64_t>> stop_counts_;
};

struct FilterResult {
  std::vector<std::uint32_t> feasible;  // rows of the table
  std::size_t satisfied = 0;
  std::vector<HardConstraint> relaxed;
};

FilterResult filter_feasible(const MetricTable& table,
                             std::span<const HardConstraint> constraints);

// Throws kInfeasible when `feasible` is empty.
std::uint32_t lexicographic_select(const MetricTable& table,
                                   std::span<const std::uint32_t> feasible,
                                   std::span<const SoftTarget> soft);

// Resolves relative thresholds against the bundle's final-exit accuracy and
// the plain on-device metrics under `c`.
SlaSpec resolve_sla(const SlaSpec& sla, const Bundle& bundle, const Conditions& c);

struct Decision {
  std::uint32_t split_index = 0;
  std::uint32_t thr_index = 0;
  MetricVector metrics;
  std::size_t satisfied = 0;
  std::vector<HardConstraint> relaxed;
  double elapsed_us = 0.0;
};

// Hard constraints must already be resolved (see resolve_sla).
Decision schedule(const Evaluator& evaluator, const SearchSpace& space, const Conditions& c,
                  const RatioTracker& ratios, const SlaSpec& sla);

}  // namespace spinn

#endif  // SPINN_SCHEDULER_HPP_
