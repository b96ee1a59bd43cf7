#ifndef SPINN_RUNTIME_PROFILER_HPP_
#define SPINN_RUNTIME_PROFILER_HPP_

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace spinn {

enum class NetworkType { k3g, k4g, k5g, kWifi, kEthernet };
inline constexpr std::size_t kNetworkTypeCount = 5;

std::string_view to_string(NetworkType type);
std::optional<NetworkType> parse_network_type(std::string_view text);

struct LinkConditions {
  double latency_ms = 0.0;
  double bandwidth_mbps = 0.0;
};

// Nominal per-type conditions used while no measurement exists.
struct NetworkPresets {
  std::array<LinkConditions, kNetworkTypeCount> by_type{};

  const LinkConditions& at(NetworkType t) const {
    return by_type[static_cast<std::size_t>(t)];
  }
  static NetworkPresets defaults();
};

NetworkPresets parse_presets(std::string_view text);
NetworkPresets load_presets(const std::filesystem::path& path);

// Bytes to milliseconds on a link of `bandwidth_mbps`, excluding latency.
double payload_ms(double bytes, double bandwidth_mbps);

class NetworkEstimate {
 public:
  static constexpr std::size_t kRealtimeWindow = 3;
  static constexpr std::size_t kHistoryWindow = 32;

  explicit NetworkEstimate(NetworkType type = NetworkType::kWifi,
                           double recency_horizon_s = 60.0)
      : type_(type), horizon_s_(recency_horizon_s) {}

  NetworkType network_type() const { return type_; }
  // Switching type drops the real-time window; history is per type.
  void set_network_type(NetworkType type);

  // One observed transfer at time `t_s`.
  void observe(double latency_ms, double bandwidth_mbps, double t_s);

  bool has_realtime() const { return !rt_.empty(); }
  bool has_history(NetworkType t) const { return !hist_[index(t)].empty(); }
  LinkConditions realtime() const;
  LinkConditions historical(NetworkType t) const;
  std::optional<double> last_transfer_s() const { return last_transfer_s_; }

  // Real-time averages when the last transfer lies within the recency
  // horizon, else the historical averages of the current type. Throws
  // kColdEstimator when neither exists.
  LinkConditions select(double now_s) const;

 private:
  static std::size_t index(NetworkType t) { return static_cast<std::size_t>(t); }

  NetworkType type_;
  double horizon_s_;
  std::deque<LinkConditions> rt_;
  std::array<std::deque<LinkConditions>, kNetworkTypeCount> hist_;
  std::optional<double> last_transfer_s_;
};

// L + 8 D / B using the estimate selected at `now_s`.
double estimate_transfer_ms(const NetworkEstimate& net, double payload_bytes, double now_s);
// Same, falling back to the nominal preset for the current type when cold.
LinkConditions select_or_preset(const NetworkEstimate& net, const NetworkPresets& presets,
                                double now_s);

struct RuntimeProfilerState {
  double device_sf = 1.0;
  // Server load as a multiplier on the offline server profile.
  double server_sf = 1.0;
  bool server_available = true;
  NetworkEstimate net;
  double last_t_real_ms = 0.0;
  double last_t_offline_ms = 0.0;
  std::optional<double> last_server_ms;
  bool estimator_inconsistent = false;
};

// SF becomes the latest measured/offline ratio; no smoothing.
void update_device_sf(RuntimeProfilerState& state, double t_real_ms, double t_offline_ms);

// Stores the piggybacked server time when present, else infers it from the
// response time minus the network terms, clamping negative values to 0 and
// raising the inconsistency flag.
double infer_server_time(RuntimeProfilerState& state, double t_response_ms,
                         double response_bytes, std::optional<double> piggybacked_ms,
                         double now_s);

// Server load factor from one observed server time against its offline cost.
void update_server_sf(RuntimeProfilerState& state, double observed_ms, double offline_ms);

struct MetricSnapshot {
  double bandwidth_mbps = 0.0;
  double latency_ms = 0.0;
  double device_sf = 1.0;
  double server_load = 1.0;
  bool server_available = true;
};

// Re-run the scheduler only when some monitored quantity moves more than the
// threshold away from the mean of its last three values.
class SchedulerGate {
 public:
  static constexpr std::size_t kWindow = 3;

  explicit SchedulerGate(double threshold = 0.05, bool backoff = false)
      : threshold_(threshold), backoff_(backoff) {}

  // Records the snapshot and returns whether the scheduler should run.
  bool should_invoke(const MetricSnapshot& snap);
  double effective_threshold() const { return threshold_ * multiplier_; }

 private:
  static bool moved(const std::deque<double>& window, double value, double threshold);

  double threshold_;
  bool backoff_;
  double multiplier_ = 1.0;
  int quiet_ = 0;
  bool seen_ = false;
  bool last_available_ = true;
  std::array<std::deque<double>, 4> windows_;
};

inline constexpr int kBackoffQuietReset = 3;

// Background availability probing with exponential backoff.
class ProbeScheduler {
 public:
  explicit ProbeScheduler(double base_s = 5.0, double cap_s = 80.0)
      : base_s_(base_s), cap_s_(cap_s), interval_s_(base_s) {}

  double interval_s() const { return interval_s_; }
  int consecutive_failures() const { return failures_; }
  double next_probe_s() const { return next_s_; }

  void schedule_from(double now_s) { next_s_ = now_s + interval_s_; }
  // Applies a probe outcome to `state` and schedules the next probe.
  // Returns true when availability flipped.
  bool on_result(RuntimeProfilerState& state, bool answered, double now_s);

 private:
  double base_s_;
  double cap_s_;
  double interval_s_;
  double next_s_ = 0.0;
  int failures_ = 0;
};

}  // namespace spinn

#endif  // SPINN_RUNTIME_PROFILER_HPP_
