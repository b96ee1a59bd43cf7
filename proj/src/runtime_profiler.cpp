#include "spinn/runtime_profiler.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "io_util.hpp"
#include "json.hpp"
#include "spinn/error.hpp"

namespace spinn {
namespace {

constexpr std::pair<NetworkType, std::string_view> kTypeNames[] = {
    {NetworkType::k3g, "3g"},     {NetworkType::k4g, "4g"},
    {NetworkType::k5g, "5g"},     {NetworkType::kWifi, "wifi"},
    {NetworkType::kEthernet, "ethernet"},
};

LinkConditions mean_of(const std::deque<LinkConditions>& window) {
  LinkConditions sum;
  for (const LinkConditions& c : window) {
    sum.latency_ms += c.latency_ms;
    sum.bandwidth_mbps += c.bandwidth_mbps;
  }
  const auto n = static_cast<double>(window.size());
  return {sum.latency_ms / n, sum.bandwidth_mbps / n};
}

}  // namespace

std::string_view to_string(NetworkType type) {
  for (const auto& [t, name] : kTypeNames) {
    if (t == type) return name;
  }
  return "wifi";
}

std::optional<NetworkType> parse_network_type(std::string_view text) {
  for (const auto& [t, name] : kTypeNames) {
    if (name == text) return t;
  }
  return std::nullopt;
}

NetworkPresets NetworkPresets::defaults() {
  NetworkPresets p;
  p.by_type[static_cast<std::size_t>(NetworkType::k3g)] = {100.0, 2.0};
  p.by_type[static_cast<std::size_t>(NetworkType::k4g)] = {50.0, 20.0};
  p.by_type[static_cast<std::size_t>(NetworkType::k5g)] = {20.0, 100.0};
  p.by_type[static_cast<std::size_t>(NetworkType::kWifi)] = {5.0, 500.0};
  p.by_type[static_cast<std::size_t>(NetworkType::kEthernet)] = {1.0, 1000.0};
  return p;
}

NetworkPresets parse_presets(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCategory::kParse, std::string("presets: ") + e.what());
  }
  NetworkPresets presets = NetworkPresets::defaults();
  if (!doc.contains("networks") || !doc["networks"].is_object()) {
    throw Error(ErrorCategory::kParse, "presets: missing object 'networks'");
  }
  for (const auto& [key, value] : doc["networks"].items()) {
    const auto type = parse_network_type(key);
    if (!type) throw Error(ErrorCategory::kParse, "presets: unknown network type " + key);
    LinkConditions c;
    try {
      c.bandwidth_mbps = value.at("bandwidth_mbps").get<double>();
      c.latency_ms = value.at("latency_ms").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCategory::kParse, "presets: " + key + ": " + e.what());
    }
    if (!(c.bandwidth_mbps > 0.0) || !(c.latency_ms >= 0.0)) {
      throw Error(ErrorCategory::kValidation, "presets: " + key + ": bad values");
    }
    presets.by_type[static_cast<std::size_t>(*type)] = c;
  }
  return presets;
}

NetworkPresets load_presets(const std::filesystem::path& path) {
  return parse_presets(detail::read_text_file(path));
}

double payload_ms(double bytes, double bandwidth_mbps) {
  if (bytes <= 0.0) return 0.0;
  if (!(bandwidth_mbps > 0.0)) return std::numeric_limits<double>::infinity();
  return 8.0 * bytes / (bandwidth_mbps * 1000.0);
}

void NetworkEstimate::set_network_type(NetworkType type) {
  if (type == type_) return;
  type_ = type;
  rt_.clear();
}

void NetworkEstimate::observe(double latency_ms, double bandwidth_mbps, double t_s) {
  // Zero is a dead link; payload_ms turns it into an infinite transfer.
  if (!(bandwidth_mbps >= 0.0) || !(latency_ms >= 0.0)) {
    throw Error(ErrorCategory::kValidation, "observed bandwidth and latency must be >= 0");
  }
  const LinkConditions c{latency_ms, bandwidth_mbps};
  rt_.push_back(c);
  if (rt_.size() > kRealtimeWindow) rt_.pop_front();
  auto& hist = hist_[index(type_)];
  hist.push_back(c);
  if (hist.size() > kHistoryWindow) hist.pop_front();
  last_transfer_s_ = t_s;
}

LinkConditions NetworkEstimate::realtime() const {
  if (rt_.empty()) throw Error(ErrorCategory::kColdEstimator, "no real-time estimate");
  return mean_of(rt_);
}

LinkConditions NetworkEstimate::historical(NetworkType t) const {
  const auto& hist = hist_[index(t)];
  if (hist.empty()) {
    throw Error(ErrorCategory::kColdEstimator,
                fmt::format("no estimate for network type {}", to_string(t)));
  }
  return mean_of(hist);
}

LinkConditions NetworkEstimate::select(double now_s) const {
  if (!rt_.empty() && last_transfer_s_ && now_s - *last_transfer_s_ <= horizon_s_) {
    return mean_of(rt_);
  }
  return historical(type_);
}

double estimate_transfer_ms(const NetworkEstimate& net, double payload_bytes, double now_s) {
  const LinkConditions c = net.select(now_s);
  return c.latency_ms + payload_ms(payload_bytes, c.bandwidth_mbps);
}

LinkConditions select_or_preset(const NetworkEstimate& net, const NetworkPresets& presets,
                                double now_s) {
  try {
    return net.select(now_s);
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::kColdEstimator) throw;
    return presets.at(net.network_type());
  }
}

void update_device_sf(RuntimeProfilerState& state, double t_real_ms, double t_offline_ms) {
  if (!(t_offline_ms > 0.0)) {
    throw Error(ErrorCategory::kValidation, "offline device estimate must be positive");
  }
  state.device_sf = t_real_ms / t_offline_ms;
  state.last_t_real_ms = t_real_ms;
  state.last_t_offline_ms = t_offline_ms;
}

double infer_server_time(RuntimeProfilerState& state, double t_response_ms,
                         double response_bytes, std::optional<double> piggybacked_ms,
                         double now_s) {
  if (piggybacked_ms) {
    state.last_server_ms = *piggybacked_ms;
    return *piggybacked_ms;
  }
  double estimate = t_response_ms - estimate_transfer_ms(state.net, response_bytes, now_s);
  if (estimate < 0.0) {
    estimate = 0.0;
    state.estimator_inconsistent = true;
  }
  state.last_server_ms = estimate;
  return estimate;
}

void update_server_sf(RuntimeProfilerState& state, double observed_ms, double offline_ms) {
  if (offline_ms > 0.0) state.server_sf = observed_ms / offline_ms;
}

bool SchedulerGate::moved(const std::deque<double>& window, double value,
                          double threshold) {
  if (window.empty()) return false;
  const double mean =
      std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  if (mean == 0.0) return value != 0.0;
  return std::fabs(value - mean) / std::fabs(mean) > threshold;
}

bool SchedulerGate::should_invoke(const MetricSnapshot& snap) {
  const double values[4] = {snap.bandwidth_mbps, snap.latency_ms, snap.device_sf,
                            snap.server_load};
  bool fire = !seen_ || snap.server_available != last_available_;
  const double threshold = effective_threshold();
  for (std::size_t i = 0; i < 4; ++i) {
    if (moved(windows_[i], values[i], threshold)) fire = true;
    windows_[i].push_back(values[i]);
    if (windows_[i].size() > kWindow) windows_[i].pop_front();
  }
  seen_ = true;
  last_available_ = snap.server_available;
  if (backoff_) {
    if (fire) {
      multiplier_ *= 2.0;
      quiet_ = 0;
    } else if (++quiet_ >= kBackoffQuietReset) {
      multiplier_ = 1.0;
    }
  }
  return fire;
}

bool ProbeScheduler::on_result(RuntimeProfilerState& state, bool answered, double now_s) {
  const bool before = state.server_available;
  if (answered) {
    failures_ = 0;
    interval_s_ = base_s_;
    state.server_available = true;
  } else {
    ++failures_;
    interval_s_ = std::min(interval_s_ * 2.0, cap_s_);
    state.server_available = false;
  }
  schedule_from(now_s);
  return before != state.server_available;
}

}  // namespace spinn
