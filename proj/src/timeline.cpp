#include "spinn/timeline.hpp"

#include <algorithm>

#include "spinn/error.hpp"
#include "spinn/runtime_profiler.hpp"

namespace spinn {

std::string_view to_string(ExitMode mode) {
  switch (mode) {
    case ExitMode::kProgressive: return "progressive";
    case ExitMode::kFinalOnly: return "final_only";
    case ExitMode::kFixed: return "fixed";
  }
  return "?";
}

CostModel::CostModel(const Bundle& bundle, ExecPolicy policy)
    : bundle_(&bundle), policy_(policy) {
  const std::size_t num_exits = bundle.num_exits();
  is_active_.assign(num_exits, false);
  switch (policy.mode) {
    case ExitMode::kProgressive:
      for (ExitId e = 0; e < num_exits; ++e) active_.push_back(e);
      break;
    case ExitMode::kFinalOnly:
      active_.push_back(static_cast<ExitId>(num_exits - 1));
      break;
    case ExitMode::kFixed:
      if (policy.fixed_exit >= num_exits) {
        throw Error(ErrorCategory::kValidation, "fixed exit out of range");
      }
      active_.push_back(policy.fixed_exit);
      break;
  }
  for (ExitId e : active_) is_active_[e] = true;
  end_layer_ = bundle.exit_layer(active_.back());

  const std::size_t n = bundle.graph().num_layers();
  dev_units_.assign(n + 1, 0.0);
  srv_units_.assign(n + 1, 0.0);
  std::size_t next = 0;
  for (LayerId l = 1; l <= n; ++l) {
    dev_units_[l] = dev_units_[l - 1] + bundle.device_layer_ms()[l];
    srv_units_[l] = srv_units_[l - 1] + bundle.server_layer_ms()[l];
    while (next < active_.size() && bundle.exit_layer(active_[next]) == l) {
      dev_units_[l] += bundle.device_exit_ms(active_[next]);
      srv_units_[l] += bundle.server_exit_ms(active_[next]);
      ++next;
    }
  }
}

ExitId CostModel::stop_exit(const SampleTrace& trace, double thr) const {
  for (ExitId e : active_) {
    if (trace.confidence[e] > thr) return e;
  }
  return active_.back();
}

ExitId CostModel::decide(const SampleTrace& trace, double thr) const {
  return decide_up_to(trace, thr, end_layer_);
}

ExitId CostModel::decide_up_to(const SampleTrace& trace, double thr,
                               LayerId last_layer) const {
  std::optional<ExitId> best;
  for (ExitId e : active_) {
    if (bundle_->exit_layer(e) > last_layer) break;
    if (trace.confidence[e] > thr) return e;
    if (!best || trace.confidence[e] > trace.confidence[*best]) best = e;
  }
  if (!best) throw Error(ErrorCategory::kValidation, "no exit evaluated");
  return *best;
}

std::optional<ExitId> CostModel::next_exit_after(LayerId split_layer) const {
  for (ExitId e : active_) {
    if (bundle_->exit_layer(e) > split_layer) return e;
  }
  return std::nullopt;
}

double CostModel::device_to_exit_ms(ExitId e, double device_sf) const {
  return device_sf * dev_units_[bundle_->exit_layer(e)];
}

double CostModel::device_to_layer_ms(LayerId layer, double device_sf) const {
  return device_sf * dev_units_.at(layer);
}

double CostModel::server_ms(LayerId split_layer, ExitId stop, double server_sf) const {
  return server_sf * (srv_units_[bundle_->exit_layer(stop)] - srv_units_[split_layer]);
}

SampleTiming CostModel::time_local(ExitId stop, double device_sf) const {
  SampleTiming t;
  t.latency_ms = device_to_exit_ms(stop, device_sf);
  t.device_ms = t.latency_ms;
  return t;
}

SampleTiming CostModel::time_offload(LayerId split_layer, ExitId stop,
                                     const LinkPlan& plan) const {
  SampleTiming t;
  t.offloaded = true;
  t.local_win = false;
  const double up_ms = payload_ms(plan.uplink_bytes, plan.bandwidth_mbps);
  const double down_ms = payload_ms(plan.downlink_bytes, plan.bandwidth_mbps);
  const double server = server_ms(split_layer, stop, plan.server_sf);
  t.t_split_ms = device_to_layer_ms(split_layer, plan.device_sf);
  t.t_server_start_ms =
      t.t_split_ms + plan.pack_ms + plan.send_delay_ms + plan.latency_ms + up_ms;
  t.t_remote_ms = t.t_server_start_ms + server + plan.latency_ms + down_ms;
  t.latency_ms = t.t_remote_ms;
  t.device_ms = t.t_split_ms;
  t.server_ms = server;
  t.network_ms = plan.pack_ms + plan.failed_uplink_ms + up_ms + down_ms;

  const auto next = policy_.fallback ? next_exit_after(split_layer) : std::nullopt;
  if (!next) return t;
  const LayerId next_layer = bundle_->exit_layer(*next);
  t.t_fallback_ms = device_to_exit_ms(*next, plan.device_sf);
  if (stop == *next && t.t_fallback_ms <= t.t_remote_ms) {
    // The device reaches the deciding exit first and cancels the server.
    t.local_win = true;
    t.cancel_sent = true;
    t.latency_ms = t.t_fallback_ms;
    t.device_ms = t.t_fallback_ms;
    const double cancel_at = t.t_fallback_ms + plan.latency_ms;
    t.server_ms = std::clamp(cancel_at - t.t_server_start_ms, 0.0, server);
    const bool replied = t.t_server_start_ms + server <= cancel_at;
    t.network_ms = plan.pack_ms + plan.failed_uplink_ms + up_ms + (replied ? down_ms : 0.0);
    return t;
  }
  if (t.t_remote_ms >= t.t_fallback_ms) {
    t.device_ms = t.t_fallback_ms;
    return t;
  }
  // Remote result first: the device finishes the layer in progress and stops.
  const auto first = dev_units_.begin() + split_layer + 1;
  const auto last = dev_units_.begin() + next_layer + 1;
  const auto it = std::lower_bound(first, last, t.t_remote_ms / plan.device_sf);
  t.device_ms = it == last ? t.t_fallback_ms : *it * plan.device_sf;
  return t;
}

SampleTiming CostModel::time_fallback(LayerId split_layer, ExitId stop,
                                      const LinkPlan& plan, double detect_ms,
                                      bool attempted_send) const {
  SampleTiming t;
  t.offloaded = attempted_send;
  t.t_split_ms = device_to_layer_ms(split_layer, plan.device_sf);
  if (attempted_send) {
    t.network_ms = plan.pack_ms + plan.failed_uplink_ms;
  }
  const auto next = policy_.fallback ? next_exit_after(split_layer) : std::nullopt;
  if (!next) {
    t.result_valid = false;
    t.latency_ms = std::max(t.t_split_ms, detect_ms);
    t.device_ms = t.t_split_ms;
    return t;
  }
  t.t_fallback_ms = device_to_exit_ms(*next, plan.device_sf);
  t.device_ms = t.t_fallback_ms;
  t.latency_ms = stop == *next ? t.t_fallback_ms : std::max(t.t_fallback_ms, detect_ms);
  return t;
}

}  // namespace spinn
