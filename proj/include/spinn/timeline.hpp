#ifndef SPINN_TIMELINE_HPP_
#define SPINN_TIMELINE_HPP_

#include <optional>
#include <string_view>
#include <vector>

#include "spinn/bundle.hpp"

namespace spinn {

enum class ExitMode {
  kProgressive,  // every exit head is evaluated
  kFinalOnly,    // plain network, only the last classifier
  kFixed,        // network truncated at one exit
};

struct ExecPolicy {
  ExitMode mode = ExitMode::kProgressive;
  ExitId fixed_exit = 0;
  // Keep computing on the device past the split up to the next exit.
  bool fallback = true;
};

std::string_view to_string(ExitMode mode);

// Conditions and transfer plan for one offload.
struct LinkPlan {
  double device_sf = 1.0;
  double server_sf = 1.0;
  double latency_ms = 0.0;  // one way
  double bandwidth_mbps = 1.0;
  double pack_ms = 0.0;
  double uplink_bytes = 0.0;
  double downlink_bytes = 0.0;
  // Extra delay before the successful send (earlier failed attempts and
  // their backoff waits) and the link time those attempts used.
  double send_delay_ms = 0.0;
  double failed_uplink_ms = 0.0;
};

struct SampleTiming {
  bool offloaded = false;
  bool local_win = true;  // the accepted result was produced on the device
  bool cancel_sent = false;
  bool result_valid = true;  // false when no usable result exists (no fallback)
  double latency_ms = 0.0;
  double device_ms = 0.0;
  double network_ms = 0.0;  // pack plus time on the wire, latency excluded
  double server_ms = 0.0;
  // Offload milestones; zero when not offloaded.
  double t_split_ms = 0.0;
  double t_server_start_ms = 0.0;
  double t_remote_ms = 0.0;
  double t_fallback_ms = 0.0;
};

// Per-sample timing shared by the scheduler's estimates and the execution
// engine. A sample is characterised by its stop exit: the first exit that
// crosses the threshold, or the last active exit when none does.
class CostModel {
 public:
  CostModel(const Bundle& bundle, ExecPolicy policy);

  const Bundle& bundle() const { return *bundle_; }
  const ExecPolicy& policy() const { return policy_; }
  const std::vector<ExitId>& active_exits() const { return active_; }
  // Layer after which nothing runs (exit layer of the last active exit).
  LayerId end_layer() const { return end_layer_; }

  ExitId stop_exit(const SampleTrace& trace, double thr) const;
  // Exit whose prediction is returned: first crossing among active exits,
  // else the most confident active exit.
  ExitId decide(const SampleTrace& trace, double thr) const;
  // Same restricted to active exits attached at or before `last_layer`.
  ExitId decide_up_to(const SampleTrace& trace, double thr, LayerId last_layer) const;

  // First active exit attached after `split_layer`.
  std::optional<ExitId> next_exit_after(LayerId split_layer) const;
  bool offloads(LayerId split_layer, ExitId stop) const {
    return bundle_->exit_layer(stop) > split_layer;
  }

  // Unscaled device time to finish `layer` including exit heads attached at
  // or before it.
  double device_units(LayerId layer) const { return dev_units_.at(layer); }
  double device_to_exit_ms(ExitId e, double device_sf) const;
  double device_to_layer_ms(LayerId layer, double device_sf) const;
  // Server time for layers split+1 .. exit layer of `stop`, with heads.
  double server_ms(LayerId split_layer, ExitId stop, double server_sf) const;

  // Local execution: the stop exit lies on the device side.
  SampleTiming time_local(ExitId stop, double device_sf) const;
  // Offloaded execution with the server answering.
  SampleTiming time_offload(LayerId split_layer, ExitId stop, const LinkPlan& plan) const;
  // Offload known to be impossible or failed: device runs to the next exit.
  // `detect_ms` is when the client learns the remote result will not come.
  SampleTiming time_fallback(LayerId split_layer, ExitId stop, const LinkPlan& plan,
                             double detect_ms, bool attempted_send) const;

 private:
  const Bundle* bundle_;
  ExecPolicy policy_;
  std::vector<ExitId> active_;
  std::vector<bool> is_active_;
  LayerId end_layer_ = 0;
  std::vector<double> dev_units_;
  std::vector<double> srv_units_;
};

}  // namespace spinn

#endif  // SPINN_TIMELINE_HPP_
